#include "kernelforge/synthetic.hpp"

#include <cmath>

#include "kernelforge/expression_io.hpp"
#include "kernelforge/kernel_matrix.hpp"

namespace kf {

Eigen::VectorXd sample_gp_prior(const KernelExpr& kernel,
                                const Eigen::MatrixXd& X, Rng& rng) {
  const Eigen::MatrixXd K = cov_matrix(kernel, X);
  const Chol chol = cholesky_with_jitter(K, canonical_string(kernel));
  Eigen::VectorXd z(X.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return chol.llt.matrixL() * z;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n < 1) throw DataError("synthetic spec needs n >= 1");
  if (!(spec.snr > 0.0) && !spec.noiseless) {
    throw DataError("synthetic spec needs snr > 0");
  }
  if (!(spec.box_hi > spec.box_lo)) {
    throw DataError("synthetic spec needs an input box with box_hi > box_lo");
  }
  const KernelExpr kernel = parse(spec.kernel_text);
  if (kernel.max_dim() >= spec.input_dim) {
    throw DataError("generating kernel uses dimension " +
                    std::to_string(kernel.max_dim() + 1) + " but d = " +
                    std::to_string(spec.input_dim));
  }

  Rng rng(spec.seed);
  Eigen::MatrixXd X(spec.n, spec.input_dim);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      X(i, j) = rng.uniform(spec.box_lo, spec.box_hi);
    }
  }

  const Eigen::VectorXd f = sample_gp_prior(kernel, X, rng);

  SyntheticData out;
  out.kernel_text = spec.kernel_text;
  out.seed = spec.seed;
  out.latent_f = f;

  Eigen::VectorXd y = f;
  if (!spec.noiseless) {
    const double mean = f.mean();
    const double var_f = (f.array() - mean).square().sum() / spec.n;
    out.noise_variance = var_f / spec.snr;
    const double sd = std::sqrt(out.noise_variance);
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += sd * rng.normal();
  }
  out.data = Dataset::from_raw(std::move(X), std::move(y),
                               "synthetic:" + spec.kernel_text);
  return out;
}

}  // namespace kf
