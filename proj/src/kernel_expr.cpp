#include "kernelforge/kernel_expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>

namespace kf {

const char* family_name(Family f) {
  switch (f) {
    case Family::Lin: return "LIN";
    case Family::Per: return "PER";
    case Family::RQ: return "RQ";
    case Family::SE: return "SE";
  }
  return "?";
}

int family_param_count(Family f) {
  switch (f) {
    case Family::Lin: return 3;
    case Family::Per: return 3;
    case Family::RQ: return 3;
    case Family::SE: return 2;
  }
  return 0;
}

const std::vector<std::string>& family_param_names(Family f) {
  static const std::vector<std::string> lin = {"sb", "sv", "loc"};
  static const std::vector<std::string> per = {"sf", "ell", "per"};
  static const std::vector<std::string> rq = {"sf", "ell", "alpha"};
  static const std::vector<std::string> se = {"sf", "ell"};
  switch (f) {
    case Family::Lin: return lin;
    case Family::Per: return per;
    case Family::RQ: return rq;
    case Family::SE: return se;
  }
  return se;
}

bool family_from_name(std::string_view name, Family* out) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  for (Family f : {Family::Lin, Family::Per, Family::RQ, Family::SE}) {
    if (upper == family_name(f)) {
      *out = f;
      return true;
    }
  }
  return false;
}

BaseKernel BaseKernel::with_defaults(Family f, int dim) {
  BaseKernel b;
  b.family = f;
  b.dim = dim;
  b.params.assign(family_param_count(f), 0.0);
  return b;
}

BaseKernel BaseKernel::unset(Family f, int dim) {
  BaseKernel b;
  b.family = f;
  b.dim = dim;
  b.params.assign(family_param_count(f),
                  std::numeric_limits<double>::quiet_NaN());
  return b;
}

std::string BaseKernel::label() const {
  return std::string(family_name(family)) + "_" + std::to_string(dim + 1);
}

KernelExpr KernelExpr::base(BaseKernel b) {
  return KernelExpr(Kind::Base, std::move(b), {});
}

KernelExpr KernelExpr::composite(Kind kind, std::vector<KernelExpr> children) {
  std::vector<KernelExpr> flat;
  flat.reserve(children.size());
  for (auto& c : children) {
    if (c.kind() == kind) {
      for (auto& g : c.children_) flat.push_back(std::move(g));
    } else {
      flat.push_back(std::move(c));
    }
  }
  if (flat.empty()) throw Error("composite kernel node needs children");
  if (flat.size() == 1) return std::move(flat.front());
  return KernelExpr(kind, BaseKernel{}, std::move(flat));
}

KernelExpr KernelExpr::sum(std::vector<KernelExpr> children) {
  return composite(Kind::Sum, std::move(children));
}

KernelExpr KernelExpr::product(std::vector<KernelExpr> children) {
  return composite(Kind::Product, std::move(children));
}

int KernelExpr::leaf_count() const {
  if (is_base()) return 1;
  int n = 0;
  for (const auto& c : children_) n += c.leaf_count();
  return n;
}

int KernelExpr::max_dim() const {
  if (is_base()) return base_.dim;
  int d = 0;
  for (const auto& c : children_) d = std::max(d, c.max_dim());
  return d;
}

double base_eval(const BaseKernel& b, double x, double x2) {
  const auto& p = b.params;
  switch (b.family) {
    case Family::SE: {
      const double sf = std::exp(p[0]);
      const double ell = std::exp(p[1]);
      const double d = x - x2;
      return sf * std::exp(-0.5 * d * d / (ell * ell));
    }
    case Family::Per: {
      const double sf = std::exp(p[0]);
      const double ell = std::exp(p[1]);
      const double per = std::exp(p[2]);
      const double s = std::sin(std::numbers::pi * (x - x2) / per);
      return sf * std::exp(-2.0 * s * s / (ell * ell));
    }
    case Family::Lin: {
      const double sb = std::exp(p[0]);
      const double sv = std::exp(p[1]);
      const double loc = p[2];
      return sb + sv * (x - loc) * (x2 - loc);
    }
    case Family::RQ: {
      const double sf = std::exp(p[0]);
      const double ell = std::exp(p[1]);
      const double alpha = std::exp(p[2]);
      const double d = x - x2;
      const double z = 1.0 + d * d / (2.0 * alpha * ell * ell);
      return sf * std::pow(z, -alpha);
    }
  }
  return 0.0;
}

double eval(const KernelExpr& expr, const Eigen::VectorXd& x,
            const Eigen::VectorXd& x2) {
  switch (expr.kind()) {
    case KernelExpr::Kind::Base: {
      const BaseKernel& b = expr.leaf();
      if (b.dim >= x.size() || b.dim >= x2.size()) {
        throw DimensionError(b.label(), b.dim,
                             static_cast<int>(std::min(x.size(), x2.size())));
      }
      return base_eval(b, x[b.dim], x2[b.dim]);
    }
    case KernelExpr::Kind::Sum: {
      double v = 0.0;
      for (const auto& c : expr.children()) v += eval(c, x, x2);
      return v;
    }
    case KernelExpr::Kind::Product: {
      double v = 1.0;
      for (const auto& c : expr.children()) v *= eval(c, x, x2);
      return v;
    }
  }
  return 0.0;
}

int param_count(const KernelExpr& expr) {
  if (expr.is_base()) return family_param_count(expr.leaf().family);
  int n = 0;
  for (const auto& c : expr.children()) n += param_count(c);
  return n;
}

void for_each_leaf(const KernelExpr& expr,
                   const std::function<void(const BaseKernel&)>& fn) {
  if (expr.is_base()) {
    fn(expr.leaf());
    return;
  }
  for (const auto& c : expr.children()) for_each_leaf(c, fn);
}

ParamVector pack(const KernelExpr& expr) {
  ParamVector out;
  out.reserve(param_count(expr));
  for_each_leaf(expr, [&](const BaseKernel& b) {
    out.insert(out.end(), b.params.begin(), b.params.end());
  });
  return out;
}

namespace {

KernelExpr unpack_rec(const KernelExpr& expr, const ParamVector& theta,
                      std::size_t& pos) {
  if (expr.is_base()) {
    BaseKernel b = expr.leaf();
    for (double& v : b.params) v = theta[pos++];
    return KernelExpr::base(std::move(b));
  }
  std::vector<KernelExpr> children;
  children.reserve(expr.children().size());
  for (const auto& c : expr.children()) {
    children.push_back(unpack_rec(c, theta, pos));
  }
  return expr.kind() == KernelExpr::Kind::Sum
             ? KernelExpr::sum(std::move(children))
             : KernelExpr::product(std::move(children));
}

}  // namespace

KernelExpr unpack(const KernelExpr& expr, const ParamVector& theta) {
  const int need = param_count(expr);
  if (static_cast<int>(theta.size()) != need) {
    throw ParamSizeError(need, static_cast<int>(theta.size()));
  }
  std::size_t pos = 0;
  return unpack_rec(expr, theta, pos);
}

namespace {

// Composite nodes order before leaves, so products print as
// "(A + B) * C" and sums as "A * B + C".
int kind_rank(KernelExpr::Kind k) {
  switch (k) {
    case KernelExpr::Kind::Sum: return 0;
    case KernelExpr::Kind::Product: return 1;
    case KernelExpr::Kind::Base: return 2;
  }
  return 3;
}

}  // namespace

int structural_compare(const KernelExpr& a, const KernelExpr& b) {
  const int ka = kind_rank(a.kind());
  const int kb = kind_rank(b.kind());
  if (ka != kb) return ka < kb ? -1 : 1;
  if (a.is_base()) {
    const int fa = static_cast<int>(a.leaf().family);
    const int fb = static_cast<int>(b.leaf().family);
    if (fa != fb) return fa < fb ? -1 : 1;
    if (a.leaf().dim != b.leaf().dim) return a.leaf().dim < b.leaf().dim ? -1 : 1;
    return 0;
  }
  const auto& ca = a.children();
  const auto& cb = b.children();
  const std::size_t n = std::min(ca.size(), cb.size());
  for (std::size_t i = 0; i < n; ++i) {
    const int c = structural_compare(ca[i], cb[i]);
    if (c != 0) return c;
  }
  if (ca.size() != cb.size()) return ca.size() < cb.size() ? -1 : 1;
  return 0;
}

KernelExpr canonical_form(const KernelExpr& expr) {
  if (expr.is_base()) return expr;
  std::vector<KernelExpr> children;
  children.reserve(expr.children().size());
  for (const auto& c : expr.children()) children.push_back(canonical_form(c));
  // Construction flattens; stable sort keeps equal structures in input order
  // so parameter values cannot influence the result.
  std::stable_sort(children.begin(), children.end(),
                   [](const KernelExpr& a, const KernelExpr& b) {
                     return structural_compare(a, b) < 0;
                   });
  return expr.kind() == KernelExpr::Kind::Sum
             ? KernelExpr::sum(std::move(children))
             : KernelExpr::product(std::move(children));
}

namespace {

void canonical_string_rec(const KernelExpr& e, bool parent_is_product,
                          std::string& out) {
  switch (e.kind()) {
    case KernelExpr::Kind::Base:
      out += e.leaf().label();
      return;
    case KernelExpr::Kind::Product: {
      bool first = true;
      for (const auto& c : e.children()) {
        if (!first) out += " * ";
        first = false;
        canonical_string_rec(c, true, out);
      }
      return;
    }
    case KernelExpr::Kind::Sum: {
      if (parent_is_product) out += "(";
      bool first = true;
      for (const auto& c : e.children()) {
        if (!first) out += " + ";
        first = false;
        canonical_string_rec(c, false, out);
      }
      if (parent_is_product) out += ")";
      return;
    }
  }
}

}  // namespace

std::string canonical_string(const KernelExpr& expr) {
  std::string out;
  canonical_string_rec(canonical_form(expr), false, out);
  return out;
}

namespace {

// Each term is one product, kept as its list of leaves.
using Term = std::vector<BaseKernel>;

std::vector<Term> sop_terms(const KernelExpr& expr) {
  switch (expr.kind()) {
    case KernelExpr::Kind::Base:
      return {{expr.leaf()}};
    case KernelExpr::Kind::Sum: {
      std::vector<Term> terms;
      for (const auto& c : expr.children()) {
        auto sub = sop_terms(c);
        terms.insert(terms.end(), std::make_move_iterator(sub.begin()),
                     std::make_move_iterator(sub.end()));
      }
      return terms;
    }
    case KernelExpr::Kind::Product: {
      std::vector<Term> terms = {{}};
      for (const auto& c : expr.children()) {
        const auto sub = sop_terms(c);
        std::vector<Term> next;
        next.reserve(terms.size() * sub.size());
        for (const auto& t : terms) {
          for (const auto& s : sub) {
            Term merged = t;
            merged.insert(merged.end(), s.begin(), s.end());
            next.push_back(std::move(merged));
          }
        }
        terms = std::move(next);
      }
      return terms;
    }
  }
  return {};
}

KernelExpr term_to_expr(const Term& t) {
  std::vector<KernelExpr> leaves;
  leaves.reserve(t.size());
  for (const auto& b : t) leaves.push_back(KernelExpr::base(b));
  if (leaves.size() == 1) return leaves.front();
  return KernelExpr::product(std::move(leaves));
}

}  // namespace

KernelExpr to_sum_of_products(const KernelExpr& expr) {
  const auto terms = sop_terms(expr);
  std::vector<KernelExpr> products;
  products.reserve(terms.size());
  for (const auto& t : terms) products.push_back(term_to_expr(t));
  if (products.size() == 1) return canonical_form(products.front());
  return canonical_form(KernelExpr::sum(std::move(products)));
}

std::vector<KernelExpr> additive_components(const KernelExpr& expr) {
  const KernelExpr sop = to_sum_of_products(expr);
  if (sop.kind() != KernelExpr::Kind::Sum) return {sop};
  return sop.children();
}

}  // namespace kf
