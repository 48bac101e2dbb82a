#include "kernelforge/optimizer.hpp"

#include <cmath>
#include <limits>

namespace kf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kArmijoC1 = 1e-4;
constexpr int kMaxProbes = 24;
}  // namespace

CgResult minimize_cg(const CgObjective& f, Eigen::VectorXd x0,
                     const CgOptions& options) {
  CgResult res;
  res.x = std::move(x0);

  Eigen::VectorXd grad(res.x.size());
  double fx = f(res.x, &grad);
  res.gradient_evals = 1;
  if (!std::isfinite(fx)) {
    res.value = kInf;
    res.feasible_start = false;
    return res;
  }
  res.value = fx;

  Eigen::VectorXd direction = -grad;
  Eigen::VectorXd x_new(res.x.size()), grad_new(res.x.size());
  double step_hint = 1.0 / (1.0 + grad.norm());
  bool steepest = true;

  while (res.gradient_evals < options.max_gradient_evals) {
    if (grad.lpNorm<Eigen::Infinity>() < options.grad_tol) {
      res.converged = true;
      break;
    }
    double slope = grad.dot(direction);
    if (slope >= 0.0) {
      direction = -grad;
      slope = grad.dot(direction);
      steepest = true;
    }

    // Value-only Armijo search with quadratic interpolation; the gradient
    // is computed once, at the accepted point.
    double t = step_hint;
    double f_new = kInf;
    bool accepted = false;
    for (int probe = 0; probe < kMaxProbes; ++probe) {
      x_new = res.x + t * direction;
      f_new = f(x_new, nullptr);
      if (std::isfinite(f_new) && f_new <= fx + kArmijoC1 * t * slope) {
        accepted = true;
        break;
      }
      if (std::isfinite(f_new)) {
        // Minimizer of the quadratic through f(0), slope, f(t), kept inside
        // [0.1 t, 0.5 t].
        const double denom = 2.0 * (f_new - fx - slope * t);
        double t_q = denom > 0.0 ? -slope * t * t / denom : 0.5 * t;
        t = std::min(0.5 * t, std::max(0.1 * t, t_q));
      } else {
        t *= 0.1;  // infeasible: retreat hard
      }
    }
    if (!accepted) {
      if (steepest) break;  // stall along steepest descent
      direction = -grad;
      steepest = true;
      continue;
    }

    f(x_new, &grad_new);
    ++res.gradient_evals;

    const double denom = grad.squaredNorm();
    double beta = grad_new.dot(grad_new - grad) / denom;
    if (!(beta > 0.0)) beta = 0.0;  // PR+ restart

    res.x.swap(x_new);
    const double f_old = fx;
    fx = f_new;
    res.value = fx;
    direction = beta * direction - grad_new;
    steepest = (beta == 0.0);
    grad.swap(grad_new);
    step_hint = std::min(1.0, 2.0 * t);

    const double scale = std::max({1.0, std::abs(f_old), std::abs(fx)});
    if (std::abs(f_old - fx) <= options.rel_change_tol * scale) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace kf
