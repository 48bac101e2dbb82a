#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "kernelforge/decomposition.hpp"
#include "kernelforge/expression_io.hpp"
#include "test_support.hpp"

using namespace kf;

namespace {

// Joint-Gaussian oracle: stack every component at the query points with the
// observations, condition with explicit dense algebra.
struct JointOracle {
  std::vector<Eigen::VectorXd> means;
  std::vector<std::vector<Eigen::MatrixXd>> cov;  // cov[i][j], signal only
};

JointOracle joint_oracle(const std::vector<KernelExpr>& comps, double noise,
                         const Dataset& data, const Eigen::MatrixXd& q) {
  const int k = static_cast<int>(comps.size());
  const Eigen::Index n = data.n(), m = q.rows();
  const Eigen::Index total = k * m + n;
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(total, total);
  for (int i = 0; i < k; ++i) {
    sigma.block(i * m, i * m, m, m) = reference::cov_matrix(comps[i], q);
    const Eigen::MatrixXd cross = reference::cov_matrix(comps[i], q, data.X);
    sigma.block(i * m, k * m, m, n) = cross;
    sigma.block(k * m, i * m, n, m) = cross.transpose();
  }
  Eigen::MatrixXd ayy = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < k; ++i) ayy += reference::cov_matrix(comps[i], data.X);
  ayy.diagonal().array() += noise;
  ayy.diagonal().array() += 1e-9 * ayy.diagonal().mean();  // mirror the jitter
  sigma.block(k * m, k * m, n, n) = ayy;

  const Eigen::MatrixXd syy_inv = ayy.inverse();
  const Eigen::MatrixXd sxy = sigma.block(0, k * m, k * m, n);
  const Eigen::VectorXd mean_all = sxy * syy_inv * data.y;
  const Eigen::MatrixXd cov_all =
      sigma.topLeftCorner(k * m, k * m) - sxy * syy_inv * sxy.transpose();

  JointOracle out;
  out.means.resize(k);
  out.cov.assign(k, std::vector<Eigen::MatrixXd>(k));
  for (int i = 0; i < k; ++i) {
    out.means[i] = mean_all.segment(i * m, m);
    for (int j = 0; j < k; ++j) {
      out.cov[i][j] = cov_all.block(i * m, j * m, m, m);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("component covariances sum to the full train covariance") {
  Rng rng(103);
  for (int i = 0; i < 25; ++i) {
    const KernelExpr e = test::random_expr(rng, 3, 1);
    const GpModel model{e, std::log(0.2)};
    const Eigen::MatrixXd x = test::random_inputs(rng, 9, 1);
    const ComponentSet set = additive_component_set(model);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(9, 9);
    for (const auto& c : set.signal) sum += cov_matrix(c, x);
    sum.diagonal().array() += set.noise_variance;
    Eigen::MatrixXd full = cov_matrix(model.kernel, x);
    full.diagonal().array() += model.noise_variance();
    CHECK(test::max_rel_err(sum, full, 1e-13) < 1e-12);
  }
}

TEST_CASE("degenerate second component vanishes") {
  // k2 ~ 0 via a tiny signal variance.
  const KernelExpr strong = parse("SE_1{sf=1, ell=1}");
  const KernelExpr tiny = parse("PER_1{sf=1e-300, ell=1, per=1}");
  const KernelExpr e = KernelExpr::sum({strong, tiny});
  Rng rng(107);
  const Dataset d = test::random_dataset(rng, 8, 1);
  const GpModel model{e, std::log(0.1)};
  const Eigen::MatrixXd q = test::random_inputs(rng, 5, 1);
  const ComponentPosterior post = decompose_posterior(model, d, q);
  REQUIRE(post.signal_count() == 2);
  // component order is canonical: PER (tiny) before SE (strong)
  const auto full = posterior_predict(GpModel{strong, model.log_noise}, d, q,
                                      {.full_covariance = true});
  for (int t = 0; t < 5; ++t) {
    CHECK(post.mean(1)[t] == doctest::Approx(full.mean[t]).epsilon(1e-9));
    CHECK(std::abs(post.mean(0)[t]) < 1e-12);
    CHECK(std::abs(post.covariance(0)(t, t)) < 1e-12);
  }
}

TEST_CASE("identical components split the posterior mean evenly") {
  const KernelExpr e = parse("SE_1{sf=1, ell=1} + SE_1{sf=1, ell=1}");
  Rng rng(109);
  const Dataset d = test::random_dataset(rng, 7, 1);
  const GpModel model{e, std::log(0.1)};
  const Eigen::MatrixXd q = test::random_inputs(rng, 6, 1);
  const ComponentPosterior post = decompose_posterior(model, d, q);
  const auto full = posterior_predict(model, d, q);
  for (int t = 0; t < 6; ++t) {
    CHECK(post.mean(0)[t] == doctest::Approx(0.5 * full.mean[t]).epsilon(1e-9));
    CHECK(post.mean(1)[t] == doctest::Approx(0.5 * full.mean[t]).epsilon(1e-9));
  }
}

TEST_CASE("mean additivity and the covariance identity") {
  Rng rng(113);
  for (int i = 0; i < 25; ++i) {
    const KernelExpr e = test::random_expr(rng, 3, 1);
    const Dataset d = test::random_dataset(rng, 8, 1);
    const GpModel model{e, std::log(0.15)};
    const Eigen::MatrixXd q = test::random_inputs(rng, 5, 1);
    const ComponentPosterior post = decompose_posterior(model, d, q);
    const auto full = posterior_predict(model, d, q, {.full_covariance = true});

    // Means over signal components (noise covaries with nothing off-train).
    Eigen::VectorXd mean_sum = Eigen::VectorXd::Zero(5);
    for (int c = 0; c < post.signal_count(); ++c) mean_sum += post.mean(c);
    for (int t = 0; t < 5; ++t) {
      CHECK(std::abs(mean_sum[t] - full.mean[t]) < 1e-8);
    }

    Eigen::MatrixXd cov_sum = Eigen::MatrixXd::Zero(5, 5);
    for (int a = 0; a < post.signal_count(); ++a) {
      for (int b = 0; b < post.signal_count(); ++b) {
        cov_sum += post.cross_covariance(a, b);
      }
    }
    CHECK((cov_sum - *full.covariance).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("two components: cov_full = cov1 + cov2 + 2 cross") {
  Rng rng(127);
  for (int i = 0; i < 25; ++i) {
    const KernelExpr c1 = KernelExpr::base(test::random_leaf(rng, 1, 0.5));
    const KernelExpr c2 = KernelExpr::base(test::random_leaf(rng, 1, 0.5));
    const KernelExpr e = KernelExpr::sum({c1, c2});
    if (e.leaf_count() != 2) continue;  // identical leaves may merge terms
    const Dataset d = test::random_dataset(rng, 8, 1);
    const GpModel model{e, std::log(0.2)};
    const Eigen::MatrixXd q = test::random_inputs(rng, 4, 1);
    const ComponentPosterior post = decompose_posterior(model, d, q);
    if (post.signal_count() != 2) continue;
    const auto full = posterior_predict(model, d, q, {.full_covariance = true});
    const Eigen::MatrixXd lhs = *full.covariance;
    const Eigen::MatrixXd rhs = post.covariance(0) + post.covariance(1) +
                                post.cross_covariance(0, 1) +
                                post.cross_covariance(1, 0);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("cross-covariance transposition and covariance symmetry") {
  Rng rng(131);
  const KernelExpr e = parse("SE_1 + PER_1 + LIN_1");
  const Dataset d = test::random_dataset(rng, 9, 1);
  const GpModel model{e, std::log(0.1)};
  const Eigen::MatrixXd q = test::random_inputs(rng, 5, 1);
  const ComponentPosterior post = decompose_posterior(model, d, q);
  for (int i = 0; i < post.count(); ++i) {
    CHECK((post.covariance(i) - post.covariance(i).transpose())
              .cwiseAbs()
              .maxCoeff() < 1e-12);
    CHECK(post.covariance(i).diagonal().minCoeff() > -1e-10);
    for (int j = 0; j < post.count(); ++j) {
      if (i == j) continue;
      CHECK((post.cross_covariance(i, j) -
             post.cross_covariance(j, i).transpose())
                .cwiseAbs()
                .maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("moments agree with the dense joint-Gaussian oracle") {
  Rng rng(137);
  for (int i = 0; i < 15; ++i) {
    const KernelExpr e = test::random_expr(rng, 3, 1);
    const auto comps = additive_components(e);
    if (comps.size() < 2 || comps.size() > 4) continue;
    const Dataset d = test::random_dataset(rng, 7, 1);
    const GpModel model{e, std::log(0.2)};
    const Eigen::MatrixXd q = test::random_inputs(rng, 4, 1);
    const ComponentPosterior post = decompose_posterior(model, d, q);
    const JointOracle oracle =
        joint_oracle(comps, model.noise_variance(), d, q);
    for (int a = 0; a < post.signal_count(); ++a) {
      CHECK((post.mean(a) - oracle.means[a]).cwiseAbs().maxCoeff() < 1e-8);
      for (int b = 0; b < post.signal_count(); ++b) {
        CHECK((post.cross_covariance(a, b) - oracle.cov[a][b])
                  .cwiseAbs()
                  .maxCoeff() < 1e-8);
      }
    }
  }
}

TEST_CASE("residuals identities") {
  Rng rng(139);
  const Dataset d = test::random_dataset(rng, 10, 1);

  // Vanishing noise: residuals vanish (smooth targets keep the
  // interpolation well conditioned).
  {
    Eigen::MatrixXd x(8, 1);
    x.col(0) = Eigen::VectorXd::LinSpaced(8, -2.0, 2.0);
    const Eigen::VectorXd y = x.col(0).array().sin();
    const Dataset smooth = Dataset::from_raw(x, y);
    const GpModel model{parse("SE_1{sf=1, ell=1}"), std::log(1e-10)};
    CHECK(residuals(model, smooth).cwiseAbs().maxCoeff() < 1e-6);
  }
  // Tiny signal: residuals approach y itself.
  {
    const GpModel model{parse("SE_1{sf=1e-12, ell=1}"), std::log(1.0)};
    const Eigen::VectorXd r = residuals(model, d);
    CHECK((r - d.y).cwiseAbs().maxCoeff() < 1e-6);
  }
  // Definition: residuals + signal means = y; residuals = noise mean.
  {
    const GpModel model{parse("SE_1 + PER_1"), std::log(0.3)};
    const Eigen::VectorXd r = residuals(model, d);
    const ComponentPosterior post = decompose_posterior(model, d, d.X);
    Eigen::VectorXd signal = Eigen::VectorXd::Zero(d.n());
    for (int c = 0; c < post.signal_count(); ++c) signal += post.mean(c);
    CHECK((r + signal - d.y).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((r - post.mean(post.noise_index())).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("noise component covaries only with matching training points") {
  Rng rng(149);
  const Dataset d = test::random_dataset(rng, 6, 1);
  const GpModel model{parse("SE_1"), std::log(0.25)};
  // Query: three held-out points plus one exact training point.
  Eigen::MatrixXd q(4, 1);
  q << 100.0, 101.0, 102.0, d.X(2, 0);
  const ComponentPosterior post = decompose_posterior(model, d, q);
  const int noise = post.noise_index();
  for (int t = 0; t < 3; ++t) {
    CHECK(post.mean(noise)[t] == 0.0);
    CHECK(post.covariance(noise)(t, t) == 0.0);
  }
  CHECK(post.covariance(noise)(3, 3) > 0.0);
}
