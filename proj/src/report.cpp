#include "kernelforge/report.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "kernelforge/dataset_io.hpp"
#include "kernelforge/expression_io.hpp"

namespace kf {

using nlohmann::json;

Eigen::MatrixXd default_query_grid(const Dataset& data, int points) {
  if (data.input_dim() != 1 || points < 2) return data.X;
  const double lo = data.X.col(0).minCoeff();
  const double hi = data.X.col(0).maxCoeff();
  const double range = hi > lo ? hi - lo : 1.0;
  const double a = lo - 0.1 * range;
  const double b = hi + 0.25 * range;
  Eigen::MatrixXd grid(points, 1);
  for (int i = 0; i < points; ++i) {
    grid(i, 0) = a + (b - a) * i / (points - 1);
  }
  return grid;
}

RunReport build_model_report(const GpModel& model, const Dataset& data,
                             const Eigen::MatrixXd& grid,
                             const std::map<std::string, std::string>& config_echo) {
  RunReport r;
  r.config = config_echo;
  r.source = data.source;
  r.n = data.n();
  r.input_dim = data.input_dim();
  r.y_mean = data.y_mean;
  r.y_std = data.y_std;

  r.model_expression = print(model.kernel, true);
  r.noise_variance = model.noise_variance();
  r.grid = grid;

  const PosteriorPrediction post = posterior_predict(model, data, r.grid);
  r.pred_mean = post.mean.unaryExpr(
      [&](double m) { return data.mean_to_original(m); });
  r.pred_variance = post.variance * (data.y_std * data.y_std);

  const ComponentPosterior decomp = decompose_posterior(model, data, r.grid);
  for (int c = 0; c < decomp.count(); ++c) {
    ComponentDump dump;
    dump.expression = c < decomp.signal_count()
                          ? print(decomp.signal_components()[c], true)
                          : "noise";
    dump.mean = decomp.mean(c) * data.y_std;
    dump.variance = decomp.variance(c) * (data.y_std * data.y_std);
    dump.lower = dump.mean - 2.0 * dump.variance.cwiseSqrt();
    dump.upper = dump.mean + 2.0 * dump.variance.cwiseSqrt();
    r.components.push_back(std::move(dump));
  }
  for (int i = 0; i < decomp.count(); ++i) {
    for (int j = i + 1; j < decomp.count(); ++j) {
      CrossDiag cd;
      cd.i = i;
      cd.j = j;
      cd.values =
          decomp.cross_covariance(i, j).diagonal() * (data.y_std * data.y_std);
      r.cross_diagonals.push_back(std::move(cd));
    }
  }
  r.residuals = kf::residuals(model, data) * data.y_std;

  // Training-input fit in original units.
  const PosteriorPrediction at_train = posterior_predict(model, data, data.X);
  double mse = 0.0;
  const Eigen::VectorXd raw = data.raw_y();
  for (int i = 0; i < data.n(); ++i) {
    const double d = data.mean_to_original(at_train.mean[i]) - raw[i];
    mse += d * d;
  }
  r.metrics["train_mse"] = mse / data.n();
  r.metrics["noise_variance"] = r.noise_variance;
  r.metrics["y_mean"] = r.y_mean;
  r.metrics["y_std"] = r.y_std;
  r.metrics["n"] = r.n;
  return r;
}

RunReport build_run_report(const Dataset& data, const SearchTrace& trace,
                           const std::map<std::string, std::string>& config_echo,
                           int grid_points) {
  if (!trace.has_winner()) throw Error("search trace has no winning model");
  const ScoredCandidate& winner = trace.winner();
  const GpModel model{winner.expr, winner.log_noise};
  RunReport r = build_model_report(model, data,
                                   default_query_grid(data, grid_points),
                                   config_echo);

  for (const auto& depth : trace.depths) {
    DepthDump dump;
    for (const auto& c : depth.candidates) {
      CandidateRecord rec;
      rec.expression = c.canonical;
      rec.with_params = c.feasible ? print(c.expr, true) : c.canonical;
      rec.parent = c.parent;
      rec.op = c.op;
      rec.lml = c.lml;
      rec.bic = c.bic;
      rec.noise_variance = std::exp(c.log_noise);
      rec.seconds = c.seconds;
      rec.feasible = c.feasible;
      rec.failure = c.failure;
      dump.candidates.push_back(std::move(rec));
    }
    dump.frontier = depth.frontier;
    r.depths.push_back(std::move(dump));
  }
  r.winner_depth = trace.winner_depth;
  r.stopped_early = !trace.improved_until_end;
  r.lml = winner.lml;
  r.bic = winner.bic;
  r.metrics["lml"] = r.lml;
  r.metrics["bic"] = r.bic;
  return r;
}

namespace {

json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vec_from_json(const json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
  return v;
}

json report_to_json(const RunReport& r) {
  json j;
  j["schema"] = r.schema;
  j["config"] = r.config;
  j["dataset"] = {{"source", r.source},
                  {"n", r.n},
                  {"input_dim", r.input_dim},
                  {"y_mean", r.y_mean},
                  {"y_std", r.y_std}};
  json depths = json::array();
  for (const auto& d : r.depths) {
    json cands = json::array();
    for (const auto& c : d.candidates) {
      cands.push_back({{"expression", c.expression},
                       {"with_params", c.with_params},
                       {"parent", c.parent},
                       {"op", c.op},
                       {"lml", c.lml},
                       {"bic", c.bic},
                       {"noise_variance", c.noise_variance},
                       {"seconds", c.seconds},
                       {"feasible", c.feasible},
                       {"failure", c.failure}});
    }
    depths.push_back({{"candidates", cands}, {"frontier", d.frontier}});
  }
  j["search"] = {{"depths", depths},
                 {"winner_depth", r.winner_depth},
                 {"stopped_early", r.stopped_early}};
  j["model"] = {{"expression", r.model_expression},
                {"noise_variance", r.noise_variance},
                {"lml", r.lml},
                {"bic", r.bic}};
  json grid = json::array();
  for (Eigen::Index i = 0; i < r.grid.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index c = 0; c < r.grid.cols(); ++c) row.push_back(r.grid(i, c));
    grid.push_back(row);
  }
  j["grid"] = grid;
  j["predictions"] = {{"mean", vec_to_json(r.pred_mean)},
                      {"variance", vec_to_json(r.pred_variance)}};
  json comps = json::array();
  for (const auto& c : r.components) {
    comps.push_back({{"expression", c.expression},
                     {"mean", vec_to_json(c.mean)},
                     {"variance", vec_to_json(c.variance)},
                     {"lower", vec_to_json(c.lower)},
                     {"upper", vec_to_json(c.upper)}});
  }
  j["components"] = comps;
  json crosses = json::array();
  for (const auto& cd : r.cross_diagonals) {
    crosses.push_back({{"i", cd.i}, {"j", cd.j}, {"values", vec_to_json(cd.values)}});
  }
  j["cross_covariance_diagonals"] = crosses;
  j["residuals"] = vec_to_json(r.residuals);
  j["metrics"] = r.metrics;
  return j;
}

void write_bundle(const RunReport& r, const std::filesystem::path& dir) {
  const Eigen::Index m = r.grid.rows();
  const Eigen::Index d = r.grid.cols();
  std::vector<std::string> names;
  for (Eigen::Index c = 0; c < d; ++c) names.push_back("x" + std::to_string(c + 1));
  names.insert(names.end(), {"mean", "lower", "upper"});

  Eigen::MatrixXd full(m, d + 3);
  full.leftCols(d) = r.grid;
  full.col(d) = r.pred_mean;
  full.col(d + 1) = r.pred_mean - 2.0 * r.pred_variance.cwiseSqrt();
  full.col(d + 2) = r.pred_mean + 2.0 * r.pred_variance.cwiseSqrt();
  write_csv((dir / "full.csv").string(), names, full);

  for (std::size_t c = 0; c < r.components.size(); ++c) {
    Eigen::MatrixXd table(m, d + 3);
    table.leftCols(d) = r.grid;
    table.col(d) = r.components[c].mean;
    table.col(d + 1) = r.components[c].lower;
    table.col(d + 2) = r.components[c].upper;
    char file[32];
    std::snprintf(file, sizeof(file), "component_%02zu.csv", c + 1);
    write_csv((dir / file).string(), names, table);
  }

  {
    std::ofstream out(dir / "metrics.csv");
    if (!out) throw DataError("cannot write metrics.csv under " + dir.string());
    out << "metric,value\n";
    for (const auto& [key, value] : r.metrics) {
      out << key << "," << format_double(value) << "\n";
    }
  }
  if (r.residuals.size() > 0) {
    Eigen::MatrixXd table(r.residuals.size(), 2);
    table.col(0) = Eigen::VectorXd::LinSpaced(r.residuals.size(), 1,
                                              r.residuals.size());
    table.col(1) = r.residuals;
    write_csv((dir / "residuals.csv").string(), {"row", "residual"}, table);
  }
}

}  // namespace

void emit_report(const RunReport& report, const std::string& dir,
                 ReportFormat format) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw DataError("cannot create output directory " + dir);
  if (format == ReportFormat::Json) {
    std::ofstream out(p / "report.json");
    if (!out) throw DataError("cannot write report.json under " + dir);
    out << report_to_json(report).dump(2) << "\n";
    if (!out) throw DataError("write failed for report.json under " + dir);
  } else {
    write_bundle(report, p);
  }
}

LoadedModel load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model report: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("malformed report " + path + ": " + e.what());
  }
  try {
    if (j.at("schema").get<std::string>() != "kernelforge-report/1") {
      throw DataError("unsupported report schema in " + path);
    }
    LoadedModel out;
    out.kernel = parse(j.at("model").at("expression").get<std::string>());
    out.noise_variance = j.at("model").at("noise_variance").get<double>();
    const json& grid = j.at("grid");
    const Eigen::Index m = grid.size();
    const Eigen::Index d = m > 0 ? grid[0].size() : 1;
    out.grid.resize(m, d);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index c = 0; c < d; ++c) {
        out.grid(i, c) = grid[i][c].get<double>();
      }
    }
    out.stored_mean = vec_from_json(j.at("predictions").at("mean"));
    out.stored_variance = vec_from_json(j.at("predictions").at("variance"));
    return out;
  } catch (const json::exception& e) {
    throw DataError("malformed report " + path + ": " + e.what());
  }
}

}  // namespace kf
