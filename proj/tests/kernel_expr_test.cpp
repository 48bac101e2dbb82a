#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kernelforge/expression_io.hpp"
#include "kernelforge/kernel_expr.hpp"
#include "kernelforge/kernel_matrix.hpp"
#include "test_support.hpp"

using namespace kf;

namespace {

Eigen::VectorXd point(double v) {
  Eigen::VectorXd x(1);
  x[0] = v;
  return x;
}

KernelExpr se(double sf = 1.0, double ell = 1.0, int dim = 0) {
  BaseKernel b = BaseKernel::with_defaults(Family::SE, dim);
  b.params = {std::log(sf), std::log(ell)};
  return KernelExpr::base(b);
}

}  // namespace

TEST_CASE("eval matches the base kernel definitions") {
  // SE at zero distance and unit distance
  CHECK(eval(se(), point(0.5), point(0.5)) == doctest::Approx(1.0));
  CHECK(eval(se(), point(0.0), point(1.0)) ==
        doctest::Approx(std::exp(-0.5)).epsilon(1e-12));

  // Per with the gap equal to the period
  BaseKernel per = BaseKernel::with_defaults(Family::Per, 0);
  per.params = {std::log(2.0), 0.0, std::log(3.0)};
  CHECK(eval(KernelExpr::base(per), point(0.0), point(3.0)) ==
        doctest::Approx(2.0).epsilon(1e-12));

  // Lin with zero offset variance
  BaseKernel lin = BaseKernel::with_defaults(Family::Lin, 0);
  lin.params = {std::log(0.0), std::log(1.0), 0.0};  // log 0 = -inf, sb = 0
  CHECK(eval(KernelExpr::base(lin), point(2.0), point(3.0)) ==
        doctest::Approx(6.0));

  // RQ at squared distance 2
  BaseKernel rq = BaseKernel::with_defaults(Family::RQ, 0);
  CHECK(eval(KernelExpr::base(rq), point(0.0), point(std::sqrt(2.0))) ==
        doctest::Approx(0.5).epsilon(1e-12));

  // Sum semantics
  const KernelExpr two = KernelExpr::sum({se(), se()});
  CHECK(eval(two, point(1.0), point(1.0)) == doctest::Approx(2.0));
}

TEST_CASE("eval rejects out-of-range dimensions naming the leaf") {
  const KernelExpr bad = KernelExpr::base(BaseKernel::with_defaults(Family::SE, 2));
  try {
    eval(bad, point(0.0), point(0.0));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(e.leaf() == "SE_3");
    CHECK(e.dim() == 2);
    CHECK(e.input_dim() == 1);
  }
}

TEST_CASE("construction flattens nests and collapses arity one") {
  const KernelExpr nested =
      KernelExpr::sum({KernelExpr::sum({se(), se()}), se()});
  CHECK(nested.children().size() == 3);
  const KernelExpr single = KernelExpr::sum({se()});
  CHECK(single.is_base());
  const KernelExpr prod =
      KernelExpr::product({KernelExpr::product({se(), se()}), se()});
  CHECK(prod.children().size() == 3);
}

TEST_CASE("param_count per family and composite") {
  CHECK(param_count(parse("SE_1")) == 2);
  CHECK(param_count(parse("PER_1")) == 3);
  CHECK(param_count(parse("LIN_1")) == 3);
  CHECK(param_count(parse("RQ_1")) == 3);
  CHECK(param_count(parse("SE_1 * PER_2")) == 5);
}

TEST_CASE("pack/unpack round trips bit-exactly") {
  Rng rng(42);
  for (int i = 0; i < 200; ++i) {
    const KernelExpr e = test::random_expr(rng, 3, 2);
    const ParamVector theta = pack(e);
    CHECK(static_cast<int>(theta.size()) == param_count(e));
    const ParamVector again = pack(unpack(e, theta));
    REQUIRE(again.size() == theta.size());
    for (std::size_t t = 0; t < theta.size(); ++t) {
      CHECK(again[t] == theta[t]);  // bitwise
    }
  }
  CHECK_THROWS_AS(unpack(parse("SE_1"), ParamVector{1.0}), ParamSizeError);
}

TEST_CASE("canonical strings ignore order but not structure") {
  CHECK(canonical_string(parse("PER_1 + SE_1")) ==
        canonical_string(parse("SE_1 + PER_1")));
  CHECK(canonical_string(parse("SE_1 + SE_1")) != canonical_string(parse("SE_1")));
  // Flattening plus the structural order
  const KernelExpr nested = KernelExpr::sum(
      {KernelExpr::sum({parse("SE_1"), parse("PER_1")}), parse("LIN_1")});
  CHECK(canonical_string(nested) == "LIN_1 + PER_1 + SE_1");
}

TEST_CASE("canonical_form preserves eval (reordering reassociates only)") {
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    const KernelExpr e = test::random_expr(rng, 4, 2);
    const KernelExpr c = canonical_form(e);
    const Eigen::VectorXd x = test::random_vector(rng, 2);
    const Eigen::VectorXd x2 = test::random_vector(rng, 2);
    CHECK(test::rel_err(eval(e, x, x2), eval(c, x, x2), 1e-300) < 1e-14);
  }
}

TEST_CASE("canonical_string invariant under child permutation") {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const KernelExpr e = test::random_expr(rng, 3, 2);
    if (e.is_base()) continue;
    std::vector<KernelExpr> shuffled = e.children();
    for (std::size_t k = shuffled.size(); k > 1; --k) {
      std::swap(shuffled[k - 1], shuffled[rng.integer(0, k - 1)]);
    }
    const KernelExpr permuted = e.kind() == KernelExpr::Kind::Sum
                                    ? KernelExpr::sum(std::move(shuffled))
                                    : KernelExpr::product(std::move(shuffled));
    CHECK(canonical_string(e) == canonical_string(permuted));
  }
}

TEST_CASE("sum-of-products: worked distributivity example") {
  const KernelExpr e = parse("SE_1 * (RQ_1 + LIN_1)");
  CHECK(canonical_string(to_sum_of_products(e)) ==
        "LIN_1 * SE_1 + RQ_1 * SE_1");
  // A bare base maps to itself.
  CHECK(canonical_string(to_sum_of_products(parse("SE_1"))) == "SE_1");
}

TEST_CASE("sum-of-products preserves values numerically") {
  Rng rng(13);
  int checked = 0;
  while (checked < 300) {
    const KernelExpr e = test::random_expr(rng, 4, 2);
    if (e.leaf_count() > 10) continue;
    ++checked;
    const KernelExpr sop = to_sum_of_products(e);
    // Result shape: sum of products of bases (or degenerate)
    const auto check_product = [](const KernelExpr& p) {
      if (p.is_base()) return true;
      if (p.kind() != KernelExpr::Kind::Product) return false;
      for (const auto& c : p.children()) {
        if (!c.is_base()) return false;
      }
      return true;
    };
    if (sop.kind() == KernelExpr::Kind::Sum) {
      for (const auto& term : sop.children()) CHECK(check_product(term));
    } else {
      CHECK(check_product(sop));
    }
    for (int k = 0; k < 3; ++k) {
      const Eigen::VectorXd x = test::random_vector(rng, 2);
      const Eigen::VectorXd x2 = test::random_vector(rng, 2);
      const double a = eval(e, x, x2);
      const double b = eval(sop, x, x2);
      CHECK(test::rel_err(a, b, 1e-14) < 1e-12);
    }
  }
}

TEST_CASE("eval symmetry in the arguments") {
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    const KernelExpr e = test::random_expr(rng, 3, 3);
    const Eigen::VectorXd x = test::random_vector(rng, 3);
    const Eigen::VectorXd x2 = test::random_vector(rng, 3);
    CHECK(eval(e, x, x2) == doctest::Approx(eval(e, x2, x)).epsilon(1e-14));
  }
}

TEST_CASE("random covariances admit a jittered Cholesky (PSD closure)") {
  Rng rng(19);
  for (int i = 0; i < 1000; ++i) {
    const KernelExpr e = test::random_expr(rng, 4, 2, 1.0);
    const int n = static_cast<int>(rng.integer(2, 20));
    const Eigen::MatrixXd x = test::random_inputs(rng, n, 2);
    const Eigen::MatrixXd k = cov_matrix(e, x);
    CHECK_NOTHROW(cholesky_with_jitter(k, canonical_string(e)));
  }
}
