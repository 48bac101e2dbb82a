#pragma once

#include <Eigen/Core>
#include <vector>

#include "kernelforge/gp.hpp"

namespace kf {

// Additive decomposition of a fitted posterior. The summands of the
// sum-of-products form of the kernel are the signal components; observation
// noise enters as one extra component whose kernel is sigma_n^2 on matching
// training points and zero everywhere else, so the component means sum
// exactly to the data at the training inputs.

struct ComponentSet {
  std::vector<KernelExpr> signal;  // canonical order
  double noise_variance = 0.0;
};

ComponentSet additive_component_set(const GpModel& model);

class ComponentPosterior {
public:
  // Number of components, the noise component included (always last).
  int count() const { return static_cast<int>(means_.size()); }
  int signal_count() const { return count() - 1; }
  int noise_index() const { return count() - 1; }

  const std::vector<KernelExpr>& signal_components() const { return signal_; }
  double noise_variance() const { return noise_variance_; }

  const Eigen::VectorXd& mean(int i) const { return means_[i]; }
  const Eigen::MatrixXd& covariance(int i) const { return covariances_[i]; }
  Eigen::VectorXd variance(int i) const {
    return covariances_[i].diagonal().cwiseMax(0.0);
  }
  // cov(f_i*, f_j*) given the observations; cross(i, j) = cross(j, i)^T.
  Eigen::MatrixXd cross_covariance(int i, int j) const;

  Eigen::VectorXd mean_sum() const;  // over every component

private:
  friend ComponentPosterior decompose_posterior(const GpModel&, const Dataset&,
                                                const Eigen::MatrixXd&);
  std::vector<KernelExpr> signal_;
  double noise_variance_ = 0.0;
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::MatrixXd> covariances_;
  std::vector<Eigen::MatrixXd> cross_;  // flat upper triangle, i < j
  int pair_index(int i, int j) const;
};

// Component posterior moments at the query points: means k_i*' A^-1 y,
// covariances k_i** - k_i*' A^-1 k_i*, and pairwise cross-covariances
// -k_i*' A^-1 k_j*, with A the summed train covariance including noise.
ComponentPosterior decompose_posterior(const GpModel& model, const Dataset& data,
                                       const Eigen::MatrixXd& Xstar);

// y minus the summed signal-component posterior means at the training
// inputs (in the model's standardized units); equals the noise component's
// posterior mean.
Eigen::VectorXd residuals(const GpModel& model, const Dataset& data);

}  // namespace kf
