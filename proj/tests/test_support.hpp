#pragma once

// Shared helpers for the test suites: random expression / dataset
// generators and finite-difference oracles. Everything is seeded through
// kf::Rng so failures reproduce.

#include <Eigen/Core>
#include <vector>

#include "kernelforge/gp.hpp"
#include "kernelforge/kernel_expr.hpp"
#include "kernelforge/kernel_matrix.hpp"
#include "kernelforge/rng.hpp"

namespace kf::test {

inline Family random_family(Rng& rng) {
  switch (rng.integer(0, 3)) {
    case 0: return Family::Lin;
    case 1: return Family::Per;
    case 2: return Family::RQ;
    default: return Family::SE;
  }
}

inline BaseKernel random_leaf(Rng& rng, int input_dim, double param_spread) {
  BaseKernel b = BaseKernel::with_defaults(
      random_family(rng), static_cast<int>(rng.integer(0, input_dim - 1)));
  for (std::size_t i = 0; i < b.params.size(); ++i) {
    b.params[i] = rng.normal(0.0, param_spread);
  }
  return b;
}

// Random expression with at most `max_depth` nesting levels. Parameters are
// drawn around their defaults, which keeps random covariance matrices
// reasonably conditioned.
inline KernelExpr random_expr(Rng& rng, int max_depth, int input_dim,
                              double param_spread = 0.7) {
  if (max_depth <= 0 || rng.uniform() < 0.4) {
    return KernelExpr::base(random_leaf(rng, input_dim, param_spread));
  }
  const int arity = static_cast<int>(rng.integer(2, 3));
  std::vector<KernelExpr> children;
  for (int i = 0; i < arity; ++i) {
    children.push_back(random_expr(rng, max_depth - 1, input_dim, param_spread));
  }
  return rng.uniform() < 0.5 ? KernelExpr::sum(std::move(children))
                             : KernelExpr::product(std::move(children));
}

inline Eigen::MatrixXd random_inputs(Rng& rng, int n, int input_dim,
                                     double lo = -2.0, double hi = 2.0) {
  Eigen::MatrixXd x(n, input_dim);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < input_dim; ++j) x(i, j) = rng.uniform(lo, hi);
  }
  return x;
}

inline Eigen::VectorXd random_vector(Rng& rng, int n, double sd = 1.0) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal(0.0, sd);
  return v;
}

inline Dataset random_dataset(Rng& rng, int n, int input_dim) {
  return Dataset::from_raw(random_inputs(rng, n, input_dim),
                           random_vector(rng, n));
}

// Central finite differences of the covariance matrix in the internal
// parameter space.
inline std::vector<Eigen::MatrixXd> fd_grad_cov(const KernelExpr& expr,
                                                const Eigen::MatrixXd& X,
                                                double h = 1e-6) {
  const ParamVector theta = pack(expr);
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t t = 0; t < theta.size(); ++t) {
    ParamVector up = theta, down = theta;
    up[t] += h;
    down[t] -= h;
    out.push_back((cov_matrix(unpack(expr, up), X) -
                   cov_matrix(unpack(expr, down), X)) /
                  (2.0 * h));
  }
  return out;
}

// Finite differences of the log marginal likelihood over
// [kernel parameters, log noise]. Richardson-extrapolated central
// differences: truncation falls as h^4 while the base step stays large
// enough to keep cancellation noise far below the tolerances.
inline Eigen::VectorXd fd_grad_lml(const GpModel& model, const Dataset& data,
                                   double h = 1e-3) {
  const ParamVector theta = pack(model.kernel);
  const auto value_at = [&](std::size_t t, double delta) {
    if (t == theta.size()) {
      return log_marginal_likelihood_value(
          GpModel{model.kernel, model.log_noise + delta}, data);
    }
    ParamVector p = theta;
    p[t] += delta;
    return log_marginal_likelihood_value(
        GpModel{unpack(model.kernel, p), model.log_noise}, data);
  };
  Eigen::VectorXd g(theta.size() + 1);
  for (std::size_t t = 0; t <= theta.size(); ++t) {
    const double wide = (value_at(t, h) - value_at(t, -h)) / (2.0 * h);
    const double narrow = (value_at(t, h / 2) - value_at(t, -h / 2)) / h;
    g[t] = (4.0 * narrow - wide) / 3.0;
  }
  return g;
}

// Relative error with an absolute floor: |a-b| / max(|a|, |b|) unless both
// are tiny.
// Gradient-check error: the analytic value must match the FD estimate at
// one of the two step sizes (sharp directions need the small step, noisy
// large-magnitude problems the large one). A systematically wrong gradient
// fails at every step size.
inline Eigen::VectorXd lml_gradient_check_errors(const GpModel& model,
                                                 const Dataset& data,
                                                 const Eigen::VectorXd& analytic,
                                                 double floor_abs = 1e-8);

inline double rel_err(double a, double b, double floor_abs = 1e-9) {
  const double diff = std::abs(a - b);
  if (diff <= floor_abs) return 0.0;
  return diff / std::max(std::abs(a), std::abs(b));
}

inline Eigen::VectorXd lml_gradient_check_errors(const GpModel& model,
                                                 const Dataset& data,
                                                 const Eigen::VectorXd& analytic,
                                                 double floor_abs) {
  const Eigen::VectorXd wide = fd_grad_lml(model, data, 1e-3);
  const Eigen::VectorXd narrow = fd_grad_lml(model, data, 1e-4);
  Eigen::VectorXd err(analytic.size());
  for (Eigen::Index t = 0; t < analytic.size(); ++t) {
    err[t] = std::min(rel_err(analytic[t], wide[t], floor_abs),
                      rel_err(analytic[t], narrow[t], floor_abs));
  }
  return err;
}

inline double max_rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                          double floor_abs = 1e-9) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      worst = std::max(worst, rel_err(a(i, j), b(i, j), floor_abs));
    }
  }
  return worst;
}

}  // namespace kf::test
