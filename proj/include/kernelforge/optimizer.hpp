#pragma once

#include <Eigen/Core>
#include <functional>

namespace kf {

// Minimizes a smooth objective with nonlinear conjugate gradients
// (Polak-Ribiere+ directions, backtracking Armijo line search). The
// objective may return +infinity for infeasible points; the line search
// backtracks away from them.

struct CgOptions {
  int max_gradient_evals = 200;
  double grad_tol = 1e-6;        // stop when the gradient infinity-norm dips below
  double rel_change_tol = 1e-9;  // or the relative objective change does
};

struct CgResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int gradient_evals = 0;
  bool converged = false;
  // False only when the starting point itself was infeasible.
  bool feasible_start = true;
};

// Objective: value at x; fills *grad when non-null.
using CgObjective =
    std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

CgResult minimize_cg(const CgObjective& f, Eigen::VectorXd x0,
                     const CgOptions& options = {});

}  // namespace kf
