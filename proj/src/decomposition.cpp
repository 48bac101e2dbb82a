#include "kernelforge/decomposition.hpp"

#include <cmath>

#include "kernelforge/expression_io.hpp"

namespace kf {

ComponentSet additive_component_set(const GpModel& model) {
  ComponentSet set;
  set.signal = additive_components(model.kernel);
  set.noise_variance = model.noise_variance();
  return set;
}

int ComponentPosterior::pair_index(int i, int j) const {
  // Upper triangle of a count() x count() grid, row-major, i < j.
  const int k = count();
  return i * k - i * (i + 1) / 2 + (j - i - 1);
}

Eigen::MatrixXd ComponentPosterior::cross_covariance(int i, int j) const {
  if (i == j) return covariances_[i];
  if (i < j) return cross_[pair_index(i, j)];
  return cross_[pair_index(j, i)].transpose();
}

Eigen::VectorXd ComponentPosterior::mean_sum() const {
  Eigen::VectorXd s = means_.front();
  for (std::size_t i = 1; i < means_.size(); ++i) s += means_[i];
  return s;
}

namespace {

// Rows of Xstar that coincide exactly with a training row; -1 otherwise.
// The noise component only covaries with itself at training points.
std::vector<Eigen::Index> match_training_rows(const Eigen::MatrixXd& X,
                                              const Eigen::MatrixXd& Xstar) {
  std::vector<Eigen::Index> match(Xstar.rows(), -1);
  for (Eigen::Index j = 0; j < Xstar.rows(); ++j) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      if ((X.row(i).array() == Xstar.row(j).array()).all()) {
        match[j] = i;
        break;
      }
    }
  }
  return match;
}

}  // namespace

ComponentPosterior decompose_posterior(const GpModel& model, const Dataset& data,
                                       const Eigen::MatrixXd& Xstar) {
  const ComponentSet set = additive_component_set(model);
  const Eigen::Index n = data.n();
  const Eigen::Index m = Xstar.rows();
  const int n_signal = static_cast<int>(set.signal.size());
  const int n_comp = n_signal + 1;

  // A is assembled as the sum of per-component matrices so the additive
  // identity holds entry-wise.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  std::vector<Eigen::MatrixXd> k_star(n_comp);  // n x m each
  for (int c = 0; c < n_signal; ++c) {
    A += cov_matrix(set.signal[c], data.X);
    k_star[c] = cov_matrix(set.signal[c], data.X, Xstar);
  }
  A.diagonal().array() += set.noise_variance;

  const Chol chol = cholesky_with_jitter(A, canonical_string(model.kernel));
  // The jitter is extra diagonal noise in the factorized system; folding it
  // into the noise component keeps the additive identities exact.
  const double effective_noise = set.noise_variance + chol.jitter;
  const Eigen::VectorXd alpha = chol.llt.solve(data.y);

  const auto match = match_training_rows(data.X, Xstar);
  Eigen::MatrixXd noise_star = Eigen::MatrixXd::Zero(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    if (match[j] >= 0) noise_star(match[j], j) = effective_noise;
  }
  k_star[n_signal] = std::move(noise_star);

  ComponentPosterior out;
  out.signal_ = set.signal;
  out.noise_variance_ = effective_noise;
  out.means_.resize(n_comp);
  out.covariances_.resize(n_comp);
  out.cross_.resize(n_comp * (n_comp - 1) / 2);

  std::vector<Eigen::MatrixXd> solved(n_comp);  // A^-1 k_i*, n x m
  for (int c = 0; c < n_comp; ++c) {
    solved[c] = chol.llt.solve(k_star[c]);
    out.means_[c] = k_star[c].transpose() * alpha;
  }
  for (int i = 0; i < n_comp; ++i) {
    Eigen::MatrixXd prior;  // k_i**
    if (i < n_signal) {
      prior = cov_matrix(set.signal[i], Xstar);
    } else {
      prior = Eigen::MatrixXd::Zero(m, m);
      for (Eigen::Index a = 0; a < m; ++a) {
        if (match[a] < 0) continue;
        for (Eigen::Index b = 0; b < m; ++b) {
          if (match[a] == match[b]) prior(a, b) = effective_noise;
        }
      }
    }
    Eigen::MatrixXd cov = prior - k_star[i].transpose() * solved[i];
    out.covariances_[i] = 0.5 * (cov + cov.transpose());
    for (int j = i + 1; j < n_comp; ++j) {
      out.cross_[out.pair_index(i, j)] =
          -(k_star[i].transpose() * solved[j]);
    }
  }
  return out;
}

Eigen::VectorXd residuals(const GpModel& model, const Dataset& data) {
  const ComponentPosterior post = decompose_posterior(model, data, data.X);
  Eigen::VectorXd signal_mean = Eigen::VectorXd::Zero(data.n());
  for (int c = 0; c < post.signal_count(); ++c) signal_mean += post.mean(c);
  return data.y - signal_mean;
}

}  // namespace kf
