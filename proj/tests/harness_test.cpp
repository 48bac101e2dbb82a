#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "kernelforge/dataset_io.hpp"
#include "kernelforge/experiments.hpp"
#include "kernelforge/expression_io.hpp"
#include "kernelforge/report.hpp"
#include "kernelforge/synthetic.hpp"
#include "test_support.hpp"

using namespace kf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("kf_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static inline int counter = 0;
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("load_csv: shapes, headers, targets") {
  TempDir dir;
  write_file(dir.file("plain.csv"), "0,1\n1,2\n2,2.5\n3,4\n4,5.5\n");
  const Dataset plain = load_csv(dir.file("plain.csv"));
  CHECK(plain.n() == 5);
  CHECK(plain.input_dim() == 1);
  CHECK(plain.X(2, 0) == 2.0);

  write_file(dir.file("named.csv"), "t,co2\n1958,315\n1959,316\n1960,317\n");
  CsvOptions by_name;
  by_name.target = "co2";
  const Dataset named = load_csv(dir.file("named.csv"), by_name);
  CHECK(named.input_dim() == 1);
  CHECK(named.X(0, 0) == 1958.0);
  CHECK(named.raw_y()[0] == doctest::Approx(315.0));

  // Target by 1-based index; the header is auto-detected either way.
  CsvOptions by_index;
  by_index.target = "1";
  const Dataset flipped = load_csv(dir.file("named.csv"), by_index);
  CHECK(flipped.X(0, 0) == 315.0);
  CHECK(flipped.raw_y()[0] == doctest::Approx(1958.0));
}

TEST_CASE("load_csv: error diagnostics") {
  TempDir dir;
  CHECK_THROWS_AS(load_csv(dir.file("missing.csv")), DataError);

  write_file(dir.file("bad_cell.csv"), "x,y\n1,2\n3,abc\n5,6\n");
  try {
    load_csv(dir.file("bad_cell.csv"));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 3") != std::string::npos);
    CHECK(msg.find("'y'") != std::string::npos);
  }

  write_file(dir.file("empty.csv"), "x,y\n");
  CHECK_THROWS_AS(load_csv(dir.file("empty.csv")), DataError);

  write_file(dir.file("ok.csv"), "x,y\n1,2\n");
  CsvOptions opts;
  opts.target = "nope";
  CHECK_THROWS_AS(load_csv(dir.file("ok.csv"), opts), DataError);

  write_file(dir.file("ragged.csv"), "x,y\n1,2\n3\n");
  CHECK_THROWS_AS(load_csv(dir.file("ragged.csv")), DataError);
}

TEST_CASE("synthetic draws are reproducible and respect the SNR definition") {
  SyntheticSpec spec;
  spec.kernel_text = "SE_1{sf=1, ell=1.5}";
  spec.n = 60;
  spec.seed = 9;
  const SyntheticData a = generate_synthetic(spec);
  const SyntheticData b = generate_synthetic(spec);
  CHECK(a.data.X == b.data.X);
  CHECK(a.data.y == b.data.y);

  // SNR = var(latent sample) / noise variance, per draw.
  const double mean = a.latent_f.mean();
  const double var_f =
      (a.latent_f.array() - mean).square().sum() / a.latent_f.size();
  CHECK(a.noise_variance == doctest::Approx(var_f / spec.snr).epsilon(1e-12));

  SyntheticSpec clean = spec;
  clean.noiseless = true;
  const SyntheticData c = generate_synthetic(clean);
  CHECK(c.noise_variance == 0.0);
  CHECK((c.data.raw_y() - c.latent_f).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(generate_synthetic(SyntheticSpec{.kernel_text = "SE_2"}),
                  DataError);  // dimension beyond d
}

TEST_CASE("prior samples reproduce the covariance (Monte-Carlo moments)") {
  const KernelExpr kernel = parse("SE_1{sf=2, ell=1} + LIN_1{sb=0.1, sv=0.3}");
  // Nearby points keep every covariance entry comparable to the variances,
  // so the 20000-draw estimator noise sits well under the 5% gate.
  Eigen::MatrixXd x(3, 1);
  x << 0.0, 0.4, 0.9;
  const Eigen::MatrixXd k = cov_matrix(kernel, x);
  Rng rng(42);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(3, 3);
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) {
    const Eigen::VectorXd f = sample_gp_prior(kernel, x, rng);
    acc += f * f.transpose();
  }
  acc /= draws;
  CHECK(test::max_rel_err(acc, k, 1e-12) < 0.05);
}

TEST_CASE("prefix slices preserve order and partition the rows") {
  Rng rng(211);
  const Dataset d = test::random_dataset(rng, 20, 2);
  const Dataset head = d.slice(0, 12);
  const Dataset tail = d.slice(12, 20);
  CHECK(head.n() + tail.n() == d.n());
  CHECK(head.X == d.X.topRows(12));
  CHECK(tail.X == d.X.bottomRows(8));
  // Raw targets survive the per-slice restandardization.
  const Eigen::VectorXd raw = d.raw_y();
  CHECK((head.raw_y() - raw.head(12)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((tail.raw_y() - raw.tail(8)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("learning curve on a constant target is exact for every method") {
  Eigen::MatrixXd x(30, 1);
  x.col(0) = Eigen::VectorXd::LinSpaced(30, 0.0, 10.0);
  const Dataset d = Dataset::from_raw(x, Eigen::VectorXd::Constant(30, 4.2));

  LearningCurveSpec spec;
  spec.fractions = {0.5};
  spec.methods = {"searched", "se", "linear"};
  SearchConfig config;
  config.max_depth = 0;
  config.restarts_per_candidate = 1;
  config.max_gradient_evals = 30;
  config.base_families = {Family::SE};
  const auto cells = run_learning_curve(d, spec, config);
  REQUIRE(cells.size() == 3);
  for (const auto& cell : cells) {
    REQUIRE(cell.ok);
    CHECK(cell.mse < 1e-10);
  }
}

TEST_CASE("learning curve: the linear baseline nails a linear target") {
  Rng rng(223);
  Eigen::MatrixXd x = test::random_inputs(rng, 40, 2, 0.0, 5.0);
  const Eigen::VectorXd y = 2.0 * x.col(0) - 0.7 * x.col(1) +
                            Eigen::VectorXd::Constant(40, 3.0);
  const Dataset d = Dataset::from_raw(x, y);
  LearningCurveSpec spec;
  spec.fractions = {0.3, 0.6};
  spec.methods = {"linear"};
  const auto cells = run_learning_curve(d, spec, SearchConfig{});
  for (const auto& cell : cells) {
    REQUIRE(cell.ok);
    CHECK(cell.mse < 1e-10);
  }
}

TEST_CASE("learning curve rejects bad fractions and unknown methods") {
  Rng rng(227);
  const Dataset d = test::random_dataset(rng, 20, 1);
  LearningCurveSpec bad;
  bad.fractions = {0.5, 0.5};
  CHECK_THROWS_AS(run_learning_curve(d, bad, SearchConfig{}), DataError);

  LearningCurveSpec unknown;
  unknown.fractions = {0.5};
  unknown.methods = {"nope"};
  const auto cells = run_learning_curve(d, unknown, SearchConfig{});
  REQUIRE(cells.size() == 1);
  CHECK(!cells[0].ok);  // recorded, not thrown
  CHECK(!cells[0].error.empty());
}

TEST_CASE("recovery: factor sets and the noise-only verdict") {
  CHECK(base_factor_set(parse("SE_1 * PER_1 + SE_1")) ==
        std::set<std::pair<Family, int>>{{Family::Per, 0}, {Family::SE, 0}});

  // Pure noise: zero signal amplitude leaves only the jitter-level iid
  // sample plus the injected noise.
  RecoverySpec spec;
  spec.base.kernel_text = "SE_1{sf=0, ell=1}";
  spec.base.n = 100;
  spec.base.snr = 10;
  spec.seeds = {1, 2};
  SearchConfig config;
  config.max_depth = 1;
  config.restarts_per_candidate = 2;
  config.max_gradient_evals = 60;
  config.base_families = {Family::SE, Family::Lin};
  const auto rows = run_recovery({spec}, config);
  REQUIRE(rows.size() == 2);
  for (const auto& row : rows) {
    CHECK(row.error.empty());
    CHECK(row.noise_only);
    CHECK(row.matched == 0);
  }
}

TEST_CASE("recovery spec files parse into specs plus config") {
  TempDir dir;
  write_file(dir.file("specs.cfg"),
             "# batch\n"
             "depth = 2\n"
             "families = SE,PER\n"
             "restarts = 1\n"
             "budget = 40\n"
             "\n"
             "[spec]\n"
             "kernel = SE_1{ell=1.5}\n"
             "n = 50\n"
             "snr = 10\n"
             "seeds = 1:3\n"
             "box = 0:5\n"
             "\n"
             "[spec]\n"
             "kernel = LIN_1\n"
             "seeds = 7,9\n");
  SearchConfig config;
  const auto specs = parse_recovery_file(dir.file("specs.cfg"), config);
  CHECK(config.max_depth == 2);
  CHECK(config.base_families == std::vector<Family>{Family::SE, Family::Per});
  CHECK(config.restarts_per_candidate == 1);
  CHECK(config.max_gradient_evals == 40);
  REQUIRE(specs.size() == 2);
  CHECK(specs[0].base.kernel_text == "SE_1{ell=1.5}");
  CHECK(specs[0].base.box_hi == 5.0);
  CHECK(specs[0].seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(specs[1].seeds == std::vector<std::uint64_t>{7, 9});

  write_file(dir.file("broken.cfg"), "[spec]\nn = 10\n");
  SearchConfig other;
  CHECK_THROWS_AS(parse_recovery_file(dir.file("broken.cfg"), other), DataError);
}

TEST_CASE("run report round trips and its CSV bundle is additive") {
  SyntheticSpec gen;
  gen.kernel_text = "SE_1{sf=1, ell=1} + LIN_1{sb=0.1, sv=0.2, loc=5}";
  gen.n = 40;
  gen.seed = 4;
  const SyntheticData synth = generate_synthetic(gen);

  SearchConfig config;
  config.max_depth = 1;
  config.restarts_per_candidate = 2;
  config.max_gradient_evals = 60;
  config.seed = 13;
  const SearchTrace trace = greedy_search(synth.data, config);
  REQUIRE(trace.has_winner());

  const RunReport report =
      build_run_report(synth.data, trace, {{"seed", "13"}}, 50);

  TempDir dir;
  emit_report(report, dir.path.string(), ReportFormat::Json);
  emit_report(report, dir.path.string(), ReportFormat::CsvBundle);

  // Reload: stored predictions must reproduce from the stored expression.
  const LoadedModel loaded = load_report(dir.file("report.json"));
  const auto post =
      posterior_predict(loaded.model(), synth.data, loaded.grid);
  for (Eigen::Index i = 0; i < loaded.grid.rows(); ++i) {
    const double mean = synth.data.mean_to_original(post.mean[i]);
    CHECK(std::abs(mean - loaded.stored_mean[i]) < 1e-8);
  }

  // Cross-file consistency: component means plus the target mean recover
  // the full posterior mean row by row.
  const Dataset full_csv = load_csv(dir.file("full.csv"), {.target = "mean"});
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(full_csv.n());
  int comp_index = 1;
  while (true) {
    char name[32];
    std::snprintf(name, sizeof(name), "component_%02d.csv", comp_index);
    if (!fs::exists(dir.path / name)) break;
    const Dataset comp = load_csv(dir.file(name), {.target = "mean"});
    sum += comp.raw_y();
    ++comp_index;
  }
  CHECK(comp_index - 1 == static_cast<int>(report.components.size()));
  const Eigen::VectorXd full_mean = full_csv.raw_y();
  for (int i = 0; i < full_csv.n(); ++i) {
    CHECK(std::abs(sum[i] + report.y_mean - full_mean[i]) < 1e-6);
  }

  // Metrics file carries the standardization record.
  bool saw_y_mean = false;
  std::ifstream metrics(dir.file("metrics.csv"));
  std::string line;
  while (std::getline(metrics, line)) {
    if (line.rfind("y_mean,", 0) == 0) saw_y_mean = true;
  }
  CHECK(saw_y_mean);
}
