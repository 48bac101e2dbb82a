#include "kernelforge/gp.hpp"

#include <cmath>
#include <limits>

#include "kernelforge/expression_io.hpp"

namespace kf {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kInf = std::numeric_limits<double>::infinity();
// Log-space parameters beyond this magnitude only ever arise from runaway
// optimization steps; treat them as infeasible instead of overflowing.
constexpr double kLogParamBound = 50.0;
}  // namespace

Dataset Dataset::from_raw(Eigen::MatrixXd X, Eigen::VectorXd y_raw,
                          std::string source) {
  if (X.rows() != y_raw.size()) {
    throw DataError("input matrix has " + std::to_string(X.rows()) +
                    " rows but the target has " + std::to_string(y_raw.size()));
  }
  if (!X.allFinite() || !y_raw.allFinite()) {
    throw DataError("dataset contains non-finite values" +
                    (source.empty() ? std::string() : " (" + source + ")"));
  }
  Dataset d;
  d.source = std::move(source);
  d.X = std::move(X);
  const Eigen::Index n = y_raw.size();
  if (n > 0) {
    d.y_mean = y_raw.mean();
    const double var = (y_raw.array() - d.y_mean).square().sum() / n;
    d.y_std = std::sqrt(var);
    if (!(d.y_std > 0.0)) d.y_std = 1.0;
    d.y = ((y_raw.array() - d.y_mean) / d.y_std).matrix();
  } else {
    d.y = std::move(y_raw);
  }
  return d;
}

Dataset Dataset::slice(int begin, int end) const {
  const Eigen::VectorXd raw = raw_y();
  Dataset out = from_raw(X.middleRows(begin, end - begin),
                         raw.segment(begin, end - begin), source);
  return out;
}

Eigen::VectorXd kernel_diag(const KernelExpr& expr, const Eigen::MatrixXd& X) {
  Eigen::VectorXd d(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    d[i] = eval(expr, X.row(i), X.row(i));
  }
  return d;
}

LmlObjective::LmlObjective(const KernelExpr& structure, const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& y, std::string context)
    : evaluator_(structure, X), y_(y), context_(std::move(context)) {
  for_each_leaf(structure, [&](const BaseKernel& b) {
    const int np = family_param_count(b.family);
    for (int t = 0; t < np; ++t) {
      unbounded_.push_back(b.family == Family::Lin && t == 2);
    }
  });
}

LmlObjective::LmlObjective(const KernelExpr& structure, const Dataset& data)
    : LmlObjective(structure, data.X, data.y, canonical_string(structure)) {}

double LmlObjective::operator()(const Eigen::VectorXd& theta,
                                Eigen::VectorXd* grad) {
  const int kp = evaluator_.param_count();
  const Eigen::Index n = y_.size();
  const bool reuse = have_state_ && theta.size() == last_theta_.size() &&
                     theta == last_theta_;
  if (!reuse) {
    have_state_ = false;
    if (!theta.allFinite()) return kInf;
    for (int t = 0; t < kp; ++t) {
      if (!unbounded_[t] && std::abs(theta[t]) > kLogParamBound) return kInf;
    }
    if (std::abs(theta[kp]) > kLogParamBound) return kInf;
    const double noise = std::exp(theta[kp]);

    Eigen::MatrixXd A = evaluator_.covariance(theta.head(kp));
    A.diagonal().array() += noise;
    try {
      chol_ = cholesky_with_jitter(A, context_);
    } catch (const ConditioningError&) {
      return kInf;
    }
    alpha_ = chol_.llt.solve(y_);
    const double log_det =
        chol_.llt.matrixLLT().diagonal().array().log().sum();
    const double lml = -0.5 * y_.dot(alpha_) - log_det - 0.5 * n * kLog2Pi;
    if (!std::isfinite(lml)) return kInf;
    last_value_ = -lml;
    last_theta_ = theta;
    have_state_ = true;
  }
  if (grad) {
    const double noise = std::exp(theta[kp]);
    // d lml / d theta_t = 1/2 sum((alpha alpha' - A^-1) .* dA_total/dtheta_t)
    // where A_total includes the diagonal jitter eps*mean(diag(A)), whose
    // parameter dependence enters through the mean-diagonal term.
    Eigen::MatrixXd M = -chol_.llt.solve(Eigen::MatrixXd::Identity(n, n));
    const double trace_m = M.trace() + alpha_.squaredNorm();
    M.noalias() += alpha_ * alpha_.transpose();
    Eigen::VectorXd diag_sums;
    Eigen::VectorXd g(kp + 1);
    g.head(kp) = evaluator_.gradient_traces(M, &diag_sums);
    g.head(kp) += (chol_.epsilon / n * trace_m) * diag_sums;
    g[kp] = noise * (1.0 + chol_.epsilon) * trace_m;
    *grad = -0.5 * g;
  }
  return last_value_;
}

namespace {

LmlResult lml_impl(const GpModel& model, const Dataset& data, bool with_grad) {
  const ParamVector packed = pack(model.kernel);
  const int kp = static_cast<int>(packed.size());
  KernelEvaluator evaluator(model.kernel, data.X);
  Eigen::MatrixXd A =
      evaluator.covariance(Eigen::Map<const Eigen::VectorXd>(packed.data(), kp));
  const double noise = model.noise_variance();
  A.diagonal().array() += noise;
  const Chol chol = cholesky_with_jitter(A, canonical_string(model.kernel));
  const Eigen::Index n = data.y.size();
  const Eigen::VectorXd alpha = chol.llt.solve(data.y);
  const double log_det = chol.llt.matrixLLT().diagonal().array().log().sum();
  LmlResult out;
  out.jitter = chol.jitter;
  out.epsilon = chol.epsilon;
  out.value = -0.5 * data.y.dot(alpha) - log_det - 0.5 * n * kLog2Pi;
  if (with_grad) {
    Eigen::MatrixXd M = -chol.llt.solve(Eigen::MatrixXd::Identity(n, n));
    const double trace_m = M.trace() + alpha.squaredNorm();
    M.noalias() += alpha * alpha.transpose();
    Eigen::VectorXd diag_sums;
    out.gradient.resize(kp + 1);
    out.gradient.head(kp) = evaluator.gradient_traces(M, &diag_sums);
    out.gradient.head(kp) += (chol.epsilon / n * trace_m) * diag_sums;
    out.gradient[kp] = noise * (1.0 + chol.epsilon) * trace_m;
    out.gradient *= 0.5;
  }
  return out;
}

}  // namespace

LmlResult log_marginal_likelihood(const GpModel& model, const Dataset& data) {
  return lml_impl(model, data, true);
}

double log_marginal_likelihood_value(const GpModel& model, const Dataset& data) {
  return lml_impl(model, data, false).value;
}

PosteriorPrediction posterior_predict(const GpModel& model, const Dataset& data,
                                      const Eigen::MatrixXd& Xstar,
                                      const PredictOptions& opts) {
  PosteriorPrediction out;
  const Eigen::Index m = Xstar.rows();
  const double noise = model.noise_variance();
  if (m == 0) {
    out.mean = Eigen::VectorXd(0);
    out.variance = Eigen::VectorXd(0);
    if (opts.full_covariance) out.covariance = Eigen::MatrixXd(0, 0);
    return out;
  }
  if (data.n() == 0) {
    // Prior fallback.
    out.mean = Eigen::VectorXd::Zero(m);
    if (opts.full_covariance) {
      Eigen::MatrixXd C = cov_matrix(model.kernel, Xstar);
      if (opts.include_noise) C.diagonal().array() += noise;
      out.variance = C.diagonal().cwiseMax(0.0);
      out.covariance = std::move(C);
    } else {
      Eigen::VectorXd v = kernel_diag(model.kernel, Xstar);
      if (opts.include_noise) v.array() += noise;
      out.variance = v.cwiseMax(0.0);
    }
    return out;
  }

  Eigen::MatrixXd A = cov_matrix(model.kernel, data.X);
  A.diagonal().array() += noise;
  Chol chol = cholesky_with_jitter(A, canonical_string(model.kernel));
  const Eigen::VectorXd alpha = chol.llt.solve(data.y);
  const Eigen::MatrixXd Ks = cov_matrix(model.kernel, data.X, Xstar);  // n x m
  out.mean = Ks.transpose() * alpha;
  const Eigen::MatrixXd V =
      chol.llt.matrixL().solve(Ks);  // L^-1 Ks, so Ks' A^-1 Ks = V'V
  if (opts.full_covariance) {
    Eigen::MatrixXd C = cov_matrix(model.kernel, Xstar);
    C.noalias() -= V.transpose() * V;
    Eigen::MatrixXd sym = 0.5 * (C + C.transpose());
    if (opts.include_noise) sym.diagonal().array() += noise;
    out.variance = sym.diagonal().cwiseMax(0.0);
    out.covariance = std::move(sym);
  } else {
    Eigen::VectorXd v =
        kernel_diag(model.kernel, Xstar) - V.colwise().squaredNorm().transpose();
    if (opts.include_noise) v.array() += noise;
    out.variance = v.cwiseMax(0.0);
  }
  return out;
}

}  // namespace kf
