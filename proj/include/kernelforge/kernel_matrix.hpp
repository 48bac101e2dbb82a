#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <string>
#include <vector>

#include "kernelforge/kernel_expr.hpp"

namespace kf {

// Covariance matrices and their hyperparameter gradients.
//
// The fast implementations assemble whole per-leaf matrices with vectorized
// Eigen array expressions; large cross-covariances additionally split the
// rows into fixed-size chunks scheduled across OpenMP threads. Chunk
// boundaries never depend on the thread count, so results are bit-identical
// whether the loop runs on one thread or many. kf::reference holds plain
// serial entry-wise implementations kept as test oracles and as benchmark
// baselines.

// Cross covariance K(X, X2), entry (i,j) = k(X_i, X2_j).
Eigen::MatrixXd cov_matrix(const KernelExpr& expr, const Eigen::MatrixXd& X,
                           const Eigen::MatrixXd& X2);

// Symmetric case K(X, X); the result is exactly symmetric.
Eigen::MatrixXd cov_matrix(const KernelExpr& expr, const Eigen::MatrixXd& X);

// One n-by-n matrix per packed parameter, in the internal parameter space
// (chain rule through the log transform already applied).
std::vector<Eigen::MatrixXd> grad_cov_matrix(const KernelExpr& expr,
                                             const Eigen::MatrixXd& X);

namespace reference {
Eigen::MatrixXd cov_matrix(const KernelExpr& expr, const Eigen::MatrixXd& X,
                           const Eigen::MatrixXd& X2);
Eigen::MatrixXd cov_matrix(const KernelExpr& expr, const Eigen::MatrixXd& X);
std::vector<Eigen::MatrixXd> grad_cov_matrix(const KernelExpr& expr,
                                             const Eigen::MatrixXd& X);
// Per-parameter derivatives of a single base kernel value.
std::vector<double> base_grad(const BaseKernel& b, double x, double x2);
}  // namespace reference

// ---- Conditioning ----------------------------------------------------------

struct Chol {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;   // value actually added to the diagonal
  double epsilon = 0.0;  // jitter / mean(diag(A))
};

// Factorizes A + eps*mean(diag(A))*I, with eps escalating from 1e-9 by
// factors of 10. Throws ConditioningError carrying `context` (an expression
// string) once eps would exceed 1e-3.
Chol cholesky_with_jitter(const Eigen::MatrixXd& A, const std::string& context);

// ---- Cached evaluator ------------------------------------------------------

// Binds one expression structure to one set of training inputs and caches
// the parameter-independent pieces (per-dimension difference matrices), so
// an optimizer can re-evaluate the covariance and its gradient traces many
// times cheaply. Stateful: gradient_traces() uses the node values left by
// the last covariance() call. Not safe for concurrent use; each worker owns
// its own evaluator.
class KernelEvaluator {
public:
  KernelEvaluator(const KernelExpr& structure, const Eigen::MatrixXd& X);

  int param_count() const { return param_count_; }
  int n() const { return static_cast<int>(x_.rows()); }

  // K(X, X) for the given packed kernel parameters (exactly symmetric).
  const Eigen::MatrixXd& covariance(const Eigen::VectorXd& theta);

  // t-th entry = sum over entries of M .* dK/dtheta_t, for the parameters
  // used in the last covariance() call. diag_sums, when non-null, receives
  // the trace of each dK/dtheta_t (needed to differentiate through the
  // diagonal-scaled jitter).
  Eigen::VectorXd gradient_traces(const Eigen::MatrixXd& M,
                                  Eigen::VectorXd* diag_sums = nullptr) const;

  // Materialized dK/dtheta_t for the last covariance() call.
  std::vector<Eigen::MatrixXd> gradient_matrices() const;

private:
  struct Node {
    KernelExpr::Kind kind;
    Family family = Family::SE;  // leaves only
    int dim = 0;
    int param_offset = 0;
    std::vector<int> children;
  };

  const Eigen::MatrixXd& diff(int dim) const { return diff_[dim]; }
  const Eigen::MatrixXd& diff_sq(int dim) const { return diff_sq_[dim]; }
  void compute_leaf(const Node& node, const Eigen::VectorXd& theta,
                    Eigen::MatrixXd& out) const;
  // factor == nullptr stands for the all-ones matrix.
  template <typename Sink>
  void leaf_gradients(int node_index, const Eigen::MatrixXd* factor,
                      Sink&& sink) const;
  void walk_factors(int node_index, const Eigen::MatrixXd* factor,
                    const std::function<void(int, const Eigen::MatrixXd*)>& fn) const;

  Eigen::MatrixXd x_;                    // training inputs, n x D
  std::vector<Node> nodes_;              // pre-order, node 0 is the root
  std::vector<Eigen::MatrixXd> diff_;    // per dim: x_i - x_j (signed)
  std::vector<Eigen::MatrixXd> diff_sq_;
  int param_count_ = 0;
  Eigen::VectorXd theta_;                 // parameters of the last evaluation
  std::vector<Eigen::MatrixXd> values_;  // per-node kernel matrices
  bool evaluated_ = false;
};

}  // namespace kf
