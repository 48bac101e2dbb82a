#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>

#include "kernelforge/kernel_expr.hpp"
#include "kernelforge/kernel_matrix.hpp"

namespace kf {

// Regression data. Targets are standardized (zero mean, unit standard
// deviation) at construction; the record inverts the transform for
// reporting. Inputs are kept raw.
struct Dataset {
  Eigen::MatrixXd X;   // n x D
  Eigen::VectorXd y;   // standardized targets
  double y_mean = 0.0;
  double y_std = 1.0;
  std::string source;

  int n() const { return static_cast<int>(X.rows()); }
  int input_dim() const { return static_cast<int>(X.cols()); }

  // Standardizes y_raw; throws DataError on non-finite values or when the
  // number of rows disagrees.
  static Dataset from_raw(Eigen::MatrixXd X, Eigen::VectorXd y_raw,
                          std::string source = {});

  Eigen::VectorXd raw_y() const { return (y_mean + (y_std * y.array())).matrix(); }
  double mean_to_original(double m) const { return y_mean + y_std * m; }
  double var_to_original(double v) const { return v * y_std * y_std; }

  // Rows [begin, end) as a new dataset, re-standardized over the slice.
  Dataset slice(int begin, int end) const;
};

// A kernel expression together with the observation-noise variance; the
// prior mean is zero (targets are standardized).
struct GpModel {
  KernelExpr kernel;
  double log_noise = -2.3025850929940457;  // log 0.1

  double noise_variance() const { return std::exp(log_noise); }
};

struct LmlResult {
  double value = 0.0;
  // Over the packed kernel parameters followed by log noise variance.
  Eigen::VectorXd gradient;
  double jitter = 0.0;   // diagonal value added by the policy
  double epsilon = 0.0;  // its dimension-free level (1e-9 when unescalated)
};

// log N(y; 0, K + sigma_n^2 I) and its gradient in the internal parameter
// space. Throws ConditioningError if the jitter policy runs out.
LmlResult log_marginal_likelihood(const GpModel& model, const Dataset& data);
double log_marginal_likelihood_value(const GpModel& model, const Dataset& data);

struct PosteriorPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;  // clamped at zero
  std::optional<Eigen::MatrixXd> covariance;
};

struct PredictOptions {
  bool include_noise = false;  // add sigma_n^2 (observation prediction)
  bool full_covariance = false;
};

// Standard GP predictive equations; with no training data the prior is
// returned. Latent-function variance unless include_noise is set.
PosteriorPrediction posterior_predict(const GpModel& model, const Dataset& data,
                                      const Eigen::MatrixXd& Xstar,
                                      const PredictOptions& opts = {});

// Diagonal of K(X, X) without forming the full matrix.
Eigen::VectorXd kernel_diag(const KernelExpr& expr, const Eigen::MatrixXd& X);

// Negative log marginal likelihood as a reusable optimization objective over
// theta = [packed kernel parameters, log noise variance]. Covariance
// assembly state is cached across calls; instances are not thread-safe, each
// worker owns one. Conditioning failures and out-of-range parameters yield
// +infinity instead of throwing.
class LmlObjective {
public:
  LmlObjective(const KernelExpr& structure, const Eigen::MatrixXd& X,
               const Eigen::VectorXd& y, std::string context);
  LmlObjective(const KernelExpr& structure, const Dataset& data);

  int dim() const { return evaluator_.param_count() + 1; }

  // Returns -lml; fills *grad when non-null.
  double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd* grad);

private:
  KernelEvaluator evaluator_;
  Eigen::VectorXd y_;
  std::vector<bool> unbounded_;  // per kernel parameter: linear-space (Lin loc)
  std::string context_;
  // Factorization state of the most recent point, so a gradient request at
  // the point the line search just accepted reuses the value-call work.
  Eigen::VectorXd last_theta_;
  Chol chol_;
  Eigen::VectorXd alpha_;
  double last_value_ = 0.0;
  bool have_state_ = false;
};

}  // namespace kf
