#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

#include "kernelforge/errors.hpp"

namespace kf {

// Base kernel families over a single input dimension:
//   SE  k(x,x') = sf * exp(-(x-x')^2 / (2 ell^2))
//   Per k(x,x') = sf * exp(-2 sin^2(pi (x-x') / per) / ell^2)
//   Lin k(x,x') = sb + sv * (x - loc) * (x' - loc)
//   RQ  k(x,x') = sf * (1 + (x-x')^2 / (2 alpha ell^2))^(-alpha)
// Enum order matches the alphabetical order of the text names, which is the
// order used for canonical sorting.
enum class Family { Lin, Per, RQ, SE };

constexpr int kFamilyCount = 4;

const char* family_name(Family f);
int family_param_count(Family f);
// Names of the linear-space parameters, e.g. {"sf", "ell"} for SE.
const std::vector<std::string>& family_param_names(Family f);
// Case-insensitive lookup; returns false if the name is unknown.
bool family_from_name(std::string_view name, Family* out);

// One leaf of a kernel expression. Positivity-constrained parameters are
// stored in log-space; Lin's location parameter is kept in linear space.
// Layouts: SE [log sf, log ell], Per [log sf, log ell, log per],
// Lin [log sb, log sv, loc], RQ [log sf, log ell, log alpha].
struct BaseKernel {
  Family family = Family::SE;
  int dim = 0;  // zero-based input dimension
  std::vector<double> params;

  // All log-parameters zero (linear value 1), Lin location zero.
  static BaseKernel with_defaults(Family f, int dim);
  // Parameters NaN, marking values the optimizer has yet to initialize.
  static BaseKernel unset(Family f, int dim);

  // Leaf label in the text syntax, e.g. "SE_1" (1-based dimension).
  std::string label() const;
};

// Algebraic kernel expression: a base kernel, or an n-ary sum or product of
// subexpressions. Immutable after construction. The factory functions
// flatten nested nodes of the same kind and collapse arity-1 nodes, so a
// Sum never directly contains a Sum and composite nodes always have at
// least two children.
class KernelExpr {
public:
  enum class Kind { Base, Product, Sum };

  KernelExpr() : KernelExpr(base(BaseKernel::with_defaults(Family::SE, 0))) {}

  static KernelExpr base(BaseKernel b);
  static KernelExpr sum(std::vector<KernelExpr> children);
  static KernelExpr product(std::vector<KernelExpr> children);

  Kind kind() const { return kind_; }
  bool is_base() const { return kind_ == Kind::Base; }
  const BaseKernel& leaf() const { return base_; }
  const std::vector<KernelExpr>& children() const { return children_; }

  int leaf_count() const;
  // Largest zero-based dimension referenced by any leaf.
  int max_dim() const;

private:
  KernelExpr(Kind kind, BaseKernel b, std::vector<KernelExpr> children)
      : kind_(kind), base_(std::move(b)), children_(std::move(children)) {}

  static KernelExpr composite(Kind kind, std::vector<KernelExpr> children);

  Kind kind_;
  BaseKernel base_;  // valid when kind_ == Base
  std::vector<KernelExpr> children_;
};

// Single-pair kernel value k(x, x'). Throws DimensionError when a leaf
// references a dimension x does not have.
double eval(const KernelExpr& expr, const Eigen::VectorXd& x,
            const Eigen::VectorXd& x2);
double base_eval(const BaseKernel& b, double x, double x2);

// ---- Parameter packing ----------------------------------------------------
// The packed vector concatenates leaf parameters in depth-first order, in
// the internal (log- or linear-) space. pack/unpack copy values verbatim, so
// round trips are bit-exact.

using ParamVector = std::vector<double>;

int param_count(const KernelExpr& expr);
ParamVector pack(const KernelExpr& expr);
// Returns a copy of `expr` carrying the given parameters. Throws
// ParamSizeError when the length does not match param_count(expr).
KernelExpr unpack(const KernelExpr& expr, const ParamVector& theta);

void for_each_leaf(const KernelExpr& expr,
                   const std::function<void(const BaseKernel&)>& fn);

// ---- Canonical form ---------------------------------------------------------
// Structural total order ignoring parameter values: node kind first
// (Base < Product < Sum), then family name alphabetically, then dimension,
// then child sequences lexicographically.
int structural_compare(const KernelExpr& a, const KernelExpr& b);

// Children of commutative nodes sorted by the structural order (stable, so
// parameter values never affect the result), nested nodes flattened.
// Evaluates identically to the input at every point pair.
KernelExpr canonical_form(const KernelExpr& expr);

// Unparameterized text of the canonical form; identical strings iff the two
// expressions have identical structure up to commutativity.
std::string canonical_string(const KernelExpr& expr);

// Expands products over sums until the result is a sum of products of base
// kernels (degenerate single product or bare base allowed). Duplicated
// leaves copy their hyperparameters; the result is canonicalized.
KernelExpr to_sum_of_products(const KernelExpr& expr);

// Summands of to_sum_of_products(expr), in canonical order.
std::vector<KernelExpr> additive_components(const KernelExpr& expr);

}  // namespace kf
