#pragma once

#include <cstdint>
#include <string>

#include "kernelforge/gp.hpp"
#include "kernelforge/rng.hpp"

namespace kf {

// One draw from N(0, K(X,X) + jitter) through the Cholesky factor.
Eigen::VectorXd sample_gp_prior(const KernelExpr& kernel,
                                const Eigen::MatrixXd& X, Rng& rng);

// Draws a dataset from a GP prior: inputs uniform in the box, function
// values from N(0, K + jitter), then iid Gaussian noise with variance
// var(f)/snr (none when noiseless is set).
struct SyntheticSpec {
  std::string kernel_text;
  int n = 300;
  int input_dim = 1;
  double box_lo = 0.0;
  double box_hi = 10.0;
  double snr = 10.0;
  bool noiseless = false;  // the snr -> infinity limit, y = f exactly
  std::uint64_t seed = 0;
};

struct SyntheticData {
  Dataset data;
  std::string kernel_text;     // ground truth
  double noise_variance = 0.0;
  Eigen::VectorXd latent_f;    // the noise-free sample
  std::uint64_t seed = 0;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace kf
