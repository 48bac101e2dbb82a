#include "kernelforge/kernel_matrix.hpp"

#include <cmath>
#include <numbers>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kf {

namespace {

constexpr double kPi = std::numbers::pi;
// Fixed row-chunk size for cross-covariance assembly. Independent of the
// thread count so serial and parallel schedules produce identical bits.
constexpr Eigen::Index kRowChunk = 160;

Eigen::MatrixXd leaf_cov(const BaseKernel& b, const Eigen::VectorXd& xa,
                         const Eigen::VectorXd& xb) {
  const auto& p = b.params;
  const Eigen::Index na = xa.size(), nb = xb.size();
  switch (b.family) {
    case Family::SE: {
      const double sf = std::exp(p[0]);
      const double inv2l2 = 0.5 * std::exp(-2.0 * p[1]);
      Eigen::MatrixXd d = xa.replicate(1, nb);
      d.rowwise() -= xb.transpose();
      return (sf * (-inv2l2 * d.array().square()).exp()).matrix();
    }
    case Family::Per: {
      const double sf = std::exp(p[0]);
      const double inv_l2 = std::exp(-2.0 * p[1]);
      const double per = std::exp(p[2]);
      Eigen::MatrixXd d = xa.replicate(1, nb);
      d.rowwise() -= xb.transpose();
      Eigen::ArrayXXd s = (kPi / per * d.array()).sin();
      return (sf * (-2.0 * inv_l2 * s.square()).exp()).matrix();
    }
    case Family::Lin: {
      const double sb = std::exp(p[0]);
      const double sv = std::exp(p[1]);
      const double loc = p[2];
      Eigen::MatrixXd v = sv * (xa.array() - loc).matrix() *
                          (xb.array() - loc).matrix().transpose();
      v.array() += sb;
      return v;
    }
    case Family::RQ: {
      const double sf = std::exp(p[0]);
      const double alpha = std::exp(p[2]);
      const double c = 0.5 * std::exp(-2.0 * p[1]) / alpha;
      Eigen::MatrixXd d = xa.replicate(1, nb);
      d.rowwise() -= xb.transpose();
      return (sf * (1.0 + c * d.array().square()).pow(-alpha)).matrix();
    }
  }
  return Eigen::MatrixXd::Zero(na, nb);
}

Eigen::MatrixXd cov_block(const KernelExpr& e, const Eigen::MatrixXd& Xa,
                          const Eigen::MatrixXd& Xb) {
  switch (e.kind()) {
    case KernelExpr::Kind::Base:
      return leaf_cov(e.leaf(), Xa.col(e.leaf().dim), Xb.col(e.leaf().dim));
    case KernelExpr::Kind::Sum: {
      Eigen::MatrixXd acc = cov_block(e.children().front(), Xa, Xb);
      for (std::size_t i = 1; i < e.children().size(); ++i) {
        acc += cov_block(e.children()[i], Xa, Xb);
      }
      return acc;
    }
    case KernelExpr::Kind::Product: {
      Eigen::MatrixXd acc = cov_block(e.children().front(), Xa, Xb);
      for (std::size_t i = 1; i < e.children().size(); ++i) {
        acc.array() *= cov_block(e.children()[i], Xa, Xb).array();
      }
      return acc;
    }
  }
  return {};
}

void check_dims(const KernelExpr& e, int input_dim) {
  for_each_leaf(e, [&](const BaseKernel& b) {
    if (b.dim >= input_dim) throw DimensionError(b.label(), b.dim, input_dim);
  });
}

}  // namespace

Eigen::MatrixXd cov_matrix(const KernelExpr& expr, const Eigen::MatrixXd& X,
                           const Eigen::MatrixXd& X2) {
  check_dims(expr, static_cast<int>(std::min(X.cols(), X2.cols())));
  const Eigen::Index n = X.rows();
  if (n == 0 || X2.rows() == 0) return Eigen::MatrixXd(n, X2.rows());
  const Eigen::Index chunks = (n + kRowChunk - 1) / kRowChunk;
  if (chunks <= 1) return cov_block(expr, X, X2);
  Eigen::MatrixXd K(n, X2.rows());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (!omp_in_parallel())
#endif
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index r0 = c * kRowChunk;
    const Eigen::Index len = std::min(kRowChunk, n - r0);
    K.middleRows(r0, len) = cov_block(expr, X.middleRows(r0, len), X2);
  }
  return K;
}

Eigen::MatrixXd cov_matrix(const KernelExpr& expr, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd K = cov_matrix(expr, X, X);
  // Mirror the lower triangle so the result is exactly symmetric.
  Eigen::MatrixXd S = K.selfadjointView<Eigen::Lower>();
  return S;
}

std::vector<Eigen::MatrixXd> grad_cov_matrix(const KernelExpr& expr,
                                             const Eigen::MatrixXd& X) {
  KernelEvaluator ev(expr, X);
  Eigen::VectorXd theta =
      Eigen::Map<const Eigen::VectorXd>(pack(expr).data(), param_count(expr));
  ev.covariance(theta);
  return ev.gradient_matrices();
}

// ---- reference --------------------------------------------------------------

namespace reference {

Eigen::MatrixXd cov_matrix(const KernelExpr& expr, const Eigen::MatrixXd& X,
                           const Eigen::MatrixXd& X2) {
  Eigen::MatrixXd K(X.rows(), X2.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X2.rows(); ++j) {
      K(i, j) = eval(expr, X.row(i), X2.row(j));
    }
  }
  return K;
}

Eigen::MatrixXd cov_matrix(const KernelExpr& expr, const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd K(n, n);
  // One evaluation per unordered pair.
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = eval(expr, X.row(i), X.row(j));
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

std::vector<double> base_grad(const BaseKernel& b, double x, double x2) {
  const auto& p = b.params;
  const double d = x - x2;
  switch (b.family) {
    case Family::SE: {
      const double l2 = std::exp(2.0 * p[1]);
      const double k = base_eval(b, x, x2);
      return {k, k * d * d / l2};
    }
    case Family::Per: {
      const double l2 = std::exp(2.0 * p[1]);
      const double per = std::exp(p[2]);
      const double ang = kPi * d / per;
      const double s = std::sin(ang), c = std::cos(ang);
      const double k = base_eval(b, x, x2);
      return {k, k * 4.0 * s * s / l2, k * 4.0 * kPi * d * s * c / (l2 * per)};
    }
    case Family::Lin: {
      const double sb = std::exp(p[0]);
      const double sv = std::exp(p[1]);
      const double loc = p[2];
      return {sb, sv * (x - loc) * (x2 - loc), -sv * (x + x2 - 2.0 * loc)};
    }
    case Family::RQ: {
      const double l2 = std::exp(2.0 * p[1]);
      const double alpha = std::exp(p[2]);
      const double z = 1.0 + d * d / (2.0 * alpha * l2);
      const double k = base_eval(b, x, x2);
      return {k, k * d * d / (z * l2), k * alpha * ((z - 1.0) / z - std::log(z))};
    }
  }
  return {};
}

namespace {

// Entry-wise value and parameter gradient via the tree, product rule applied
// per node.
double accumulate_entry(const KernelExpr& e, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& x2, std::vector<double>& grads,
                        int& offset) {
  switch (e.kind()) {
    case KernelExpr::Kind::Base: {
      const BaseKernel& b = e.leaf();
      const auto g = base_grad(b, x[b.dim], x2[b.dim]);
      for (double v : g) grads[offset++] = v;
      return base_eval(b, x[b.dim], x2[b.dim]);
    }
    case KernelExpr::Kind::Sum: {
      double acc = 0.0;
      for (const auto& c : e.children()) {
        acc += accumulate_entry(c, x, x2, grads, offset);
      }
      return acc;
    }
    case KernelExpr::Kind::Product: {
      const int begin = offset;
      std::vector<double> child_values;
      std::vector<int> child_ends;
      double prod = 1.0;
      for (const auto& c : e.children()) {
        const double v = accumulate_entry(c, x, x2, grads, offset);
        child_values.push_back(v);
        child_ends.push_back(offset);
        prod *= v;
      }
      // Scale each child's gradient block by the product of the siblings.
      int start = begin;
      for (std::size_t ci = 0; ci < child_values.size(); ++ci) {
        double others = 1.0;
        for (std::size_t cj = 0; cj < child_values.size(); ++cj) {
          if (cj != ci) others *= child_values[cj];
        }
        for (int t = start; t < child_ends[ci]; ++t) grads[t] *= others;
        start = child_ends[ci];
      }
      return prod;
    }
  }
  return 0.0;
}

}  // namespace

std::vector<Eigen::MatrixXd> grad_cov_matrix(const KernelExpr& expr,
                                             const Eigen::MatrixXd& X) {
  const int np = param_count(expr);
  const Eigen::Index n = X.rows();
  std::vector<Eigen::MatrixXd> out(np, Eigen::MatrixXd(n, n));
  std::vector<double> grads(np);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      int offset = 0;
      accumulate_entry(expr, X.row(i), X.row(j), grads, offset);
      for (int t = 0; t < np; ++t) out[t](i, j) = grads[t];
    }
  }
  return out;
}

}  // namespace reference

// ---- conditioning -----------------------------------------------------------

Chol cholesky_with_jitter(const Eigen::MatrixXd& A, const std::string& context) {
  if (!A.allFinite()) {
    throw ConditioningError(context + " (non-finite entries)", 0.0);
  }
  double scale = A.rows() > 0 ? A.diagonal().mean() : 1.0;
  if (!(scale > 0.0)) scale = 1.0;
  double eps = 1e-9;
  while (eps < 1.5e-3) {
    Eigen::MatrixXd Aj = A;
    Aj.diagonal().array() += eps * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(Aj);
    if (llt.info() == Eigen::Success) return {std::move(llt), eps * scale, eps};
    eps *= 10.0;
  }
  throw ConditioningError(context, 1e-3 * scale);
}

// ---- KernelEvaluator --------------------------------------------------------

KernelEvaluator::KernelEvaluator(const KernelExpr& structure,
                                 const Eigen::MatrixXd& X)
    : x_(X) {
  const int input_dim = static_cast<int>(X.cols());
  std::vector<bool> needs_diff(std::max(input_dim, 1), false);
  int offset = 0;
  // Pre-order flattening; children always follow their parent.
  const std::function<int(const KernelExpr&)> add = [&](const KernelExpr& e) {
    const int index = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    Node& node = nodes_.back();
    node.kind = e.kind();
    if (e.is_base()) {
      const BaseKernel& b = e.leaf();
      if (b.dim >= input_dim) throw DimensionError(b.label(), b.dim, input_dim);
      nodes_[index].family = b.family;
      nodes_[index].dim = b.dim;
      nodes_[index].param_offset = offset;
      offset += family_param_count(b.family);
      if (b.family != Family::Lin) needs_diff[b.dim] = true;
    } else {
      std::vector<int> children;
      for (const auto& c : e.children()) children.push_back(add(c));
      nodes_[index].children = std::move(children);
    }
    return index;
  };
  add(structure);
  param_count_ = offset;
  diff_.resize(needs_diff.size());
  diff_sq_.resize(needs_diff.size());
  const Eigen::Index n = X.rows();
  for (std::size_t d = 0; d < needs_diff.size(); ++d) {
    if (!needs_diff[d]) continue;
    Eigen::MatrixXd m = X.col(d).replicate(1, n);
    m.rowwise() -= X.col(d).transpose();
    diff_[d] = m;
    diff_sq_[d] = m.array().square();
  }
  values_.resize(nodes_.size());
}

void KernelEvaluator::compute_leaf(const Node& node, const Eigen::VectorXd& theta,
                                   Eigen::MatrixXd& out) const {
  const double* p = theta.data() + node.param_offset;
  const Eigen::Index n = x_.rows();
  switch (node.family) {
    case Family::SE: {
      const double sf = std::exp(p[0]);
      const double inv2l2 = 0.5 * std::exp(-2.0 * p[1]);
      out = (sf * (-inv2l2 * diff_sq(node.dim).array()).exp()).matrix();
      return;
    }
    case Family::Per: {
      const double sf = std::exp(p[0]);
      const double inv_l2 = std::exp(-2.0 * p[1]);
      const double per = std::exp(p[2]);
      Eigen::ArrayXXd s = (kPi / per * diff(node.dim).array()).sin();
      out = (sf * (-2.0 * inv_l2 * s.square()).exp()).matrix();
      return;
    }
    case Family::Lin: {
      const double sb = std::exp(p[0]);
      const double sv = std::exp(p[1]);
      const double loc = p[2];
      Eigen::VectorXd u = x_.col(node.dim).array() - loc;
      out = sv * u * u.transpose();
      out.array() += sb;
      return;
    }
    case Family::RQ: {
      const double sf = std::exp(p[0]);
      const double alpha = std::exp(p[2]);
      const double c = 0.5 * std::exp(-2.0 * p[1]) / alpha;
      out = (sf * (1.0 + c * diff_sq(node.dim).array()).pow(-alpha)).matrix();
      return;
    }
  }
}

const Eigen::MatrixXd& KernelEvaluator::covariance(const Eigen::VectorXd& theta) {
  theta_ = theta;
  // Children precede parents when walking the pre-order list backwards.
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    const Node& node = nodes_[i];
    switch (node.kind) {
      case KernelExpr::Kind::Base:
        compute_leaf(node, theta_, values_[i]);
        break;
      case KernelExpr::Kind::Sum: {
        values_[i] = values_[node.children.front()];
        for (std::size_t c = 1; c < node.children.size(); ++c) {
          values_[i] += values_[node.children[c]];
        }
        break;
      }
      case KernelExpr::Kind::Product: {
        values_[i] = values_[node.children.front()];
        for (std::size_t c = 1; c < node.children.size(); ++c) {
          values_[i].array() *= values_[node.children[c]].array();
        }
        break;
      }
    }
  }
  Eigen::MatrixXd sym = values_[0].selfadjointView<Eigen::Lower>();
  values_[0] = std::move(sym);
  evaluated_ = true;
  return values_[0];
}

void KernelEvaluator::walk_factors(
    int node_index, const Eigen::MatrixXd* factor,
    const std::function<void(int, const Eigen::MatrixXd*)>& fn) const {
  const Node& node = nodes_[node_index];
  switch (node.kind) {
    case KernelExpr::Kind::Base:
      fn(node_index, factor);
      return;
    case KernelExpr::Kind::Sum:
      for (int c : node.children) walk_factors(c, factor, fn);
      return;
    case KernelExpr::Kind::Product: {
      const auto& ch = node.children;
      const std::size_t m = ch.size();
      // Leave-one-out products via suffix accumulation and a running prefix.
      std::vector<Eigen::MatrixXd> suffix(m);
      for (std::size_t i = m - 1; i > 0; --i) {
        if (i == m - 1) {
          suffix[i - 1] = factor ? factor->cwiseProduct(values_[ch[i]])
                                 : values_[ch[i]];
        } else {
          suffix[i - 1] = suffix[i].cwiseProduct(values_[ch[i]]);
        }
      }
      Eigen::MatrixXd prefix;  // product of the children before i
      Eigen::MatrixXd combined;
      for (std::size_t i = 0; i < m; ++i) {
        if (i == 0) {
          walk_factors(ch[0], &suffix[0], fn);
          prefix = values_[ch[0]];
        } else if (i + 1 < m) {
          combined = prefix.cwiseProduct(suffix[i]);
          walk_factors(ch[i], &combined, fn);
          prefix.array() *= values_[ch[i]].array();
        } else {
          combined = factor ? prefix.cwiseProduct(*factor) : prefix;
          walk_factors(ch[i], &combined, fn);
        }
      }
      return;
    }
  }
}

template <typename Sink>
void KernelEvaluator::leaf_gradients(int node_index, const Eigen::MatrixXd* factor,
                                     Sink&& sink) const {
  const Node& node = nodes_[node_index];
  const double* p = theta_.data() + node.param_offset;
  const Eigen::MatrixXd& v = values_[node_index];
  const int t0 = node.param_offset;
  Eigen::MatrixXd g;
  switch (node.family) {
    case Family::SE: {
      const double inv_l2 = std::exp(-2.0 * p[1]);
      g = factor ? v.cwiseProduct(*factor) : v;
      sink(t0, g);
      g.array() *= inv_l2 * diff_sq(node.dim).array();
      sink(t0 + 1, g);
      return;
    }
    case Family::Per: {
      const double inv_l2 = std::exp(-2.0 * p[1]);
      const double per = std::exp(p[2]);
      const Eigen::ArrayXXd ang = kPi / per * diff(node.dim).array();
      Eigen::MatrixXd vf = factor ? v.cwiseProduct(*factor) : v;
      sink(t0, vf);
      g = (vf.array() * (4.0 * inv_l2) * ang.sin().square()).matrix();
      sink(t0 + 1, g);
      g = (vf.array() * (4.0 * kPi * inv_l2 / per) * diff(node.dim).array() *
           ang.sin() * ang.cos())
              .matrix();
      sink(t0 + 2, g);
      return;
    }
    case Family::Lin: {
      const double sb = std::exp(p[0]);
      const double sv = std::exp(p[1]);
      const double loc = p[2];
      if (factor) {
        g = sb * *factor;
      } else {
        g = Eigen::MatrixXd::Constant(v.rows(), v.cols(), sb);
      }
      sink(t0, g);
      g = (v.array() - sb).matrix();
      if (factor) g.array() *= factor->array();
      sink(t0 + 1, g);
      const Eigen::VectorXd u = x_.col(node.dim).array() - loc;
      g = (-sv) * (u.replicate(1, u.size()) +
                   u.transpose().replicate(u.size(), 1));
      if (factor) g.array() *= factor->array();
      sink(t0 + 2, g);
      return;
    }
    case Family::RQ: {
      const double inv_l2 = std::exp(-2.0 * p[1]);
      const double alpha = std::exp(p[2]);
      const Eigen::ArrayXXd z =
          1.0 + (0.5 * inv_l2 / alpha) * diff_sq(node.dim).array();
      Eigen::MatrixXd vf = factor ? v.cwiseProduct(*factor) : v;
      sink(t0, vf);
      g = (vf.array() * inv_l2 * diff_sq(node.dim).array() / z).matrix();
      sink(t0 + 1, g);
      g = (vf.array() * alpha * ((z - 1.0) / z - z.log())).matrix();
      sink(t0 + 2, g);
      return;
    }
  }
}

Eigen::VectorXd KernelEvaluator::gradient_traces(const Eigen::MatrixXd& M,
                                                 Eigen::VectorXd* diag_sums) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(param_count_);
  if (!diag_sums) {
    // M folds into the factor chain: sum(M .* (F .* dV)) = sum((M .* F) .* dV).
    walk_factors(0, &M, [&](int leaf, const Eigen::MatrixXd* factor) {
      leaf_gradients(leaf, factor, [&](int t, const Eigen::MatrixXd& gm) {
        out[t] = gm.sum();
      });
    });
    return out;
  }
  diag_sums->setZero(param_count_);
  walk_factors(0, nullptr, [&](int leaf, const Eigen::MatrixXd* factor) {
    leaf_gradients(leaf, factor, [&](int t, const Eigen::MatrixXd& gm) {
      out[t] = (M.array() * gm.array()).sum();
      (*diag_sums)[t] = gm.trace();
    });
  });
  return out;
}

std::vector<Eigen::MatrixXd> KernelEvaluator::gradient_matrices() const {
  std::vector<Eigen::MatrixXd> out(param_count_);
  walk_factors(0, nullptr, [&](int leaf, const Eigen::MatrixXd* factor) {
    leaf_gradients(leaf, factor, [&](int t, const Eigen::MatrixXd& gm) {
      out[t] = gm;
    });
  });
  return out;
}

}  // namespace kf
