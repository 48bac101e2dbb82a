// Command-line front end: structure search, prediction, decomposition,
// synthetic data generation and the experiment protocols.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "kernelforge/dataset_io.hpp"
#include "kernelforge/decomposition.hpp"
#include "kernelforge/experiments.hpp"
#include "kernelforge/expression_io.hpp"
#include "kernelforge/report.hpp"
#include "kernelforge/search.hpp"
#include "kernelforge/synthetic.hpp"

namespace {

using nlohmann::json;

// Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonSearchFlags {
  std::string families = "SE,PER,LIN,RQ";
  int depth = 4;
  int restarts = 3;
  int budget = 200;
  int beam = 1;
  std::uint64_t seed = 0;
  bool serial = false;
  bool no_dedup = false;
};

void add_search_flags(CLI::App* cmd, CommonSearchFlags* f) {
  cmd->add_option("--families", f->families,
                  "Comma-separated base families (SE,PER,LIN,RQ)");
  cmd->add_option("--depth", f->depth, "Expansion rounds after the base round");
  cmd->add_option("--restarts", f->restarts, "Optimizer restarts per candidate");
  cmd->add_option("--budget", f->budget, "Gradient evaluations per restart");
  cmd->add_option("--beam", f->beam, "Frontier width");
  cmd->add_option("--seed", f->seed, "Random seed");
  cmd->add_flag("--serial", f->serial, "Evaluate candidates on one thread");
  cmd->add_flag("--no-dedup", f->no_dedup,
                "Keep structurally duplicate candidates");
}

kf::SearchConfig to_config(const CommonSearchFlags& f) {
  kf::SearchConfig c;
  try {
    std::vector<kf::Family> fams;
    std::size_t pos = 0;
    const std::string& text = f.families;
    while (pos <= text.size()) {
      const auto comma = text.find(',', pos);
      const std::string tok = text.substr(
          pos, comma == std::string::npos ? std::string::npos : comma - pos);
      if (!tok.empty()) {
        kf::Family fam;
        if (!kf::family_from_name(tok, &fam)) {
          throw UsageError("unknown kernel family '" + tok + "'");
        }
        fams.push_back(fam);
      }
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (fams.empty()) throw UsageError("--families must name at least one family");
    c.base_families = std::move(fams);
  } catch (const UsageError&) {
    throw;
  }
  c.max_depth = f.depth;
  c.restarts_per_candidate = f.restarts;
  c.max_gradient_evals = f.budget;
  c.beam_width = f.beam;
  c.seed = f.seed;
  c.parallel = !f.serial;
  c.dedup = !f.no_dedup;
  return c;
}

std::map<std::string, std::string> echo_config(const CommonSearchFlags& f,
                                               const std::string& data,
                                               const std::string& target) {
  return {{"data", data},        {"target", target},
          {"families", f.families}, {"depth", std::to_string(f.depth)},
          {"restarts", std::to_string(f.restarts)},
          {"budget", std::to_string(f.budget)},
          {"beam", std::to_string(f.beam)},
          {"seed", std::to_string(f.seed)},
          {"dedup", f.no_dedup ? "no" : "yes"}};
}

kf::CsvHeader header_mode(const std::string& mode) {
  if (mode == "auto") return kf::CsvHeader::Auto;
  if (mode == "yes") return kf::CsvHeader::Yes;
  if (mode == "no") return kf::CsvHeader::No;
  throw UsageError("--header must be auto, yes or no");
}

std::vector<double> parse_fractions(const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    // start:end:step
    const auto c1 = text.find(':');
    const auto c2 = text.find(':', c1 + 1);
    if (c2 == std::string::npos) {
      throw UsageError("--fractions wants start:end:step or a comma list");
    }
    const double start = std::stod(text.substr(0, c1));
    const double end = std::stod(text.substr(c1 + 1, c2 - c1 - 1));
    const double step = std::stod(text.substr(c2 + 1));
    if (!(step > 0)) throw UsageError("--fractions step must be positive");
    for (double v = start; v <= end + 1e-12; v += step) out.push_back(v);
    return out;
  }
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string tok = text.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!tok.empty()) out.push_back(std::stod(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string tok = text.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!tok.empty()) out.push_back(tok);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw kf::DataError("cannot create output directory " + dir);
}

// ---- subcommands -----------------------------------------------------------

int run_search(const std::string& data_path, const std::string& target,
               const std::string& header, const CommonSearchFlags& flags,
               int grid, const std::string& out_dir) {
  kf::CsvOptions csv;
  csv.target = target;
  csv.header = header_mode(header);
  const kf::Dataset data = kf::load_csv(data_path, csv);
  const kf::SearchConfig config = to_config(flags);
  const kf::SearchTrace trace = kf::greedy_search(data, config);
  if (!trace.has_winner()) {
    std::cerr << "search found no feasible model\n";
    return 4;
  }
  const kf::RunReport report = kf::build_run_report(
      data, trace, echo_config(flags, data_path, target), grid);
  kf::emit_report(report, out_dir, kf::ReportFormat::Json);
  kf::emit_report(report, out_dir, kf::ReportFormat::CsvBundle);
  std::cout << "winner: " << trace.winner().canonical << "\n"
            << "lml: " << kf::format_double(trace.winner().lml)
            << "  bic: " << kf::format_double(trace.winner().bic) << "\n"
            << "report: " << out_dir << "/report.json\n";
  return 0;
}

int run_predict(const std::string& model_path, const std::string& data_path,
                const std::string& target, const std::string& header, int grid,
                bool include_noise, const std::string& out_dir) {
  const kf::LoadedModel loaded = kf::load_report(model_path);
  kf::CsvOptions csv;
  csv.target = target;
  csv.header = header_mode(header);
  const kf::Dataset data = kf::load_csv(data_path, csv);
  const Eigen::MatrixXd query =
      grid > 0 ? kf::default_query_grid(data, grid) : loaded.grid;
  kf::PredictOptions opts;
  opts.include_noise = include_noise;
  const kf::PosteriorPrediction post =
      kf::posterior_predict(loaded.model(), data, query, opts);

  ensure_dir(out_dir);
  const Eigen::Index m = query.rows(), d = query.cols();
  Eigen::MatrixXd table(m, d + 3);
  table.leftCols(d) = query;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double mean = data.mean_to_original(post.mean[i]);
    const double sd = std::sqrt(data.var_to_original(post.variance[i]));
    table(i, d) = mean;
    table(i, d + 1) = mean - 2.0 * sd;
    table(i, d + 2) = mean + 2.0 * sd;
  }
  std::vector<std::string> names;
  for (Eigen::Index c = 0; c < d; ++c) names.push_back("x" + std::to_string(c + 1));
  names.insert(names.end(), {"mean", "lower", "upper"});
  kf::write_csv(out_dir + "/predictions.csv", names, table);

  json j;
  j["model"] = model_path;
  j["mean"] = json::array();
  j["variance"] = json::array();
  for (Eigen::Index i = 0; i < m; ++i) {
    j["mean"].push_back(data.mean_to_original(post.mean[i]));
    j["variance"].push_back(data.var_to_original(post.variance[i]));
  }
  std::ofstream out(out_dir + "/predictions.json");
  out << j.dump(2) << "\n";
  std::cout << "predictions: " << out_dir << "/predictions.csv\n";
  return 0;
}

int run_decompose(const std::string& model_path, const std::string& data_path,
                  const std::string& target, const std::string& header,
                  int grid, const std::string& out_dir) {
  const kf::LoadedModel loaded = kf::load_report(model_path);
  kf::CsvOptions csv;
  csv.target = target;
  csv.header = header_mode(header);
  const kf::Dataset data = kf::load_csv(data_path, csv);
  const kf::RunReport report =
      kf::build_model_report(loaded.model(), data,
                             kf::default_query_grid(data, grid),
                             {{"model", model_path}, {"data", data_path}});
  kf::emit_report(report, out_dir, kf::ReportFormat::Json);
  kf::emit_report(report, out_dir, kf::ReportFormat::CsvBundle);
  std::cout << "decomposition: " << out_dir << " (" << report.components.size()
            << " components)\n";
  return 0;
}

int run_synth(const std::string& kernel, int n, int d, double snr,
              bool noiseless, double box_lo, double box_hi, std::uint64_t seed,
              const std::string& out_file) {
  kf::SyntheticSpec spec;
  try {
    kf::parse(kernel);
  } catch (const kf::ParseError& e) {
    throw UsageError(std::string("--kernel: ") + e.what());
  }
  spec.kernel_text = kernel;
  spec.n = n;
  spec.input_dim = d;
  spec.snr = snr;
  spec.noiseless = noiseless;
  spec.box_lo = box_lo;
  spec.box_hi = box_hi;
  spec.seed = seed;
  const kf::SyntheticData synth = kf::generate_synthetic(spec);

  Eigen::MatrixXd table(synth.data.n(), d + 1);
  table.leftCols(d) = synth.data.X;
  table.col(d) = synth.data.raw_y();
  std::vector<std::string> names;
  for (int c = 0; c < d; ++c) names.push_back("x" + std::to_string(c + 1));
  names.push_back("y");
  kf::write_csv(out_file, names, table);

  json truth;
  truth["kernel"] = synth.kernel_text;
  truth["noise_variance"] = synth.noise_variance;
  truth["seed"] = synth.seed;
  truth["snr"] = snr;
  std::ofstream t(out_file + ".truth.json");
  t << truth.dump(2) << "\n";
  std::cout << "wrote " << synth.data.n() << " points to " << out_file << "\n";
  return 0;
}

int run_recover(const std::string& spec_path, const CommonSearchFlags& flags,
                const CLI::App* cmd, const std::string& out_dir) {
  kf::SearchConfig config = to_config(flags);
  std::vector<kf::RecoverySpec> specs =
      kf::parse_recovery_file(spec_path, config);
  // Explicit command-line flags override the spec file.
  if (cmd->count("--depth")) config.max_depth = flags.depth;
  if (cmd->count("--families")) config.base_families = to_config(flags).base_families;
  if (cmd->count("--restarts")) config.restarts_per_candidate = flags.restarts;
  if (cmd->count("--budget")) config.max_gradient_evals = flags.budget;
  if (cmd->count("--beam")) config.beam_width = flags.beam;
  if (cmd->count("--seed")) config.seed = flags.seed;
  config.parallel = !flags.serial;

  const auto rows = kf::run_recovery(specs, config);
  ensure_dir(out_dir);
  std::ofstream csv(out_dir + "/recovery.csv");
  csv << "true_kernel,snr,seed,recovered,matched,total_true,noise_only,all_"
         "matched,error\n";
  json j = json::array();
  for (const auto& r : rows) {
    csv << '"' << r.true_kernel << "\"," << kf::format_double(r.snr) << ","
        << r.seed << ",\"" << r.recovered << "\"," << r.matched << ","
        << r.total_true << "," << (r.noise_only ? 1 : 0) << ","
        << (r.all_matched ? 1 : 0) << ",\"" << r.error << "\"\n";
    j.push_back({{"true_kernel", r.true_kernel},
                 {"snr", r.snr},
                 {"seed", r.seed},
                 {"recovered", r.recovered},
                 {"matched", r.matched},
                 {"total_true", r.total_true},
                 {"noise_only", r.noise_only},
                 {"all_matched", r.all_matched},
                 {"error", r.error}});
    std::cout << r.true_kernel << " snr=" << r.snr << " seed=" << r.seed
              << " -> "
              << (r.noise_only ? "(noise only)"
                               : r.error.empty() ? r.recovered : r.error)
              << " [" << r.matched << "/" << r.total_true << "]\n";
  }
  std::ofstream jf(out_dir + "/recovery.json");
  jf << j.dump(2) << "\n";
  return 0;
}

int run_curve(const std::string& data_path, const std::string& target,
              const std::string& header, const std::string& fractions,
              const std::string& methods, const CommonSearchFlags& flags,
              const std::string& out_dir) {
  kf::CsvOptions csv_opts;
  csv_opts.target = target;
  csv_opts.header = header_mode(header);
  const kf::Dataset data = kf::load_csv(data_path, csv_opts);
  kf::LearningCurveSpec spec;
  spec.fractions = parse_fractions(fractions);
  spec.methods = split_list(methods);
  const auto cells = kf::run_learning_curve(data, spec, to_config(flags));

  ensure_dir(out_dir);
  std::ofstream csv(out_dir + "/curve.csv");
  csv << "fraction,train_n,method,mse,ok,error\n";
  json j = json::array();
  for (const auto& c : cells) {
    csv << kf::format_double(c.fraction) << "," << c.train_n << "," << c.method
        << "," << (c.ok ? kf::format_double(c.mse) : "") << ","
        << (c.ok ? 1 : 0) << ",\"" << c.error << "\"\n";
    j.push_back({{"fraction", c.fraction},
                 {"train_n", c.train_n},
                 {"method", c.method},
                 {"mse", c.ok ? json(c.mse) : json()},
                 {"ok", c.ok},
                 {"error", c.error}});
    std::cout << "fraction " << c.fraction << " " << c.method << ": "
              << (c.ok ? kf::format_double(c.mse) : c.error) << "\n";
  }
  std::ofstream jf(out_dir + "/curve.json");
  jf << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernelforge: compositional kernel structure discovery for GP regression"};
  app.require_subcommand(1);

  // search
  auto* search = app.add_subcommand("search", "Greedy kernel structure search");
  std::string s_data, s_target, s_header = "auto", s_out = "out";
  int s_grid = 400;
  CommonSearchFlags s_flags;
  search->add_option("--data", s_data, "CSV data file")->required();
  search->add_option("--target", s_target, "Target column (name or 1-based index)");
  search->add_option("--header", s_header, "auto|yes|no");
  search->add_option("--grid", s_grid, "Query grid size for the report");
  search->add_option("--out", s_out, "Output directory")->required();
  add_search_flags(search, &s_flags);
  search->set_config("--config");

  // predict
  auto* predict = app.add_subcommand("predict", "Predict from a stored model");
  std::string p_model, p_data, p_target, p_header = "auto", p_out = "out";
  int p_grid = 0;
  bool p_noise = false;
  predict->add_option("--model", p_model, "report.json from a search run")->required();
  predict->add_option("--data", p_data, "CSV data file")->required();
  predict->add_option("--target", p_target, "Target column");
  predict->add_option("--header", p_header, "auto|yes|no");
  predict->add_option("--grid", p_grid, "Fresh query grid size (0 = stored grid)");
  predict->add_flag("--include-noise", p_noise, "Add observation noise");
  predict->add_option("--out", p_out, "Output directory")->required();
  predict->set_config("--config");

  // decompose
  auto* decompose = app.add_subcommand("decompose", "Additive component posteriors");
  std::string d_model, d_data, d_target, d_header = "auto", d_out = "out";
  int d_grid = 400;
  decompose->add_option("--model", d_model, "report.json from a search run")->required();
  decompose->add_option("--data", d_data, "CSV data file")->required();
  decompose->add_option("--target", d_target, "Target column");
  decompose->add_option("--header", d_header, "auto|yes|no");
  decompose->add_option("--grid", d_grid, "Query grid size");
  decompose->add_option("--out", d_out, "Output directory")->required();
  decompose->set_config("--config");

  // synth
  auto* synth = app.add_subcommand("synth", "Sample a dataset from a GP prior");
  std::string y_kernel, y_out = "synthetic.csv";
  int y_n = 300, y_d = 1;
  double y_snr = 10.0, y_lo = 0.0, y_hi = 10.0;
  bool y_noiseless = false;
  std::uint64_t y_seed = 0;
  synth->add_option("--kernel", y_kernel, "Generating kernel expression")->required();
  synth->add_option("--n", y_n, "Number of points");
  synth->add_option("--d", y_d, "Input dimensions");
  synth->add_option("--snr", y_snr, "Signal-to-noise ratio var(f)/var(noise)");
  synth->add_flag("--noiseless", y_noiseless, "No observation noise (y = f)");
  synth->add_option("--box-lo", y_lo, "Input box lower bound");
  synth->add_option("--box-hi", y_hi, "Input box upper bound");
  synth->add_option("--seed", y_seed, "Random seed");
  synth->add_option("--out", y_out, "Output CSV file")->required();
  synth->set_config("--config");

  // recover
  auto* recover = app.add_subcommand("recover", "Synthetic structure recovery batch");
  std::string r_spec, r_out = "out";
  CommonSearchFlags r_flags;
  recover->add_option("--spec", r_spec, "Recovery spec file")->required();
  recover->add_option("--out", r_out, "Output directory")->required();
  add_search_flags(recover, &r_flags);
  recover->set_config("--config");

  // curve
  auto* curve = app.add_subcommand("curve", "Extrapolation learning curves");
  std::string c_data, c_target, c_header = "auto", c_out = "out";
  std::string c_fractions = "0.1:0.9:0.1";
  std::string c_methods = "searched,se,per,se+per,se*per,linear";
  CommonSearchFlags c_flags;
  curve->add_option("--data", c_data, "CSV data file")->required();
  curve->add_option("--target", c_target, "Target column");
  curve->add_option("--header", c_header, "auto|yes|no");
  curve->add_option("--fractions", c_fractions, "start:end:step or comma list");
  curve->add_option("--methods", c_methods, "Comma-separated method list");
  curve->add_option("--out", c_out, "Output directory")->required();
  add_search_flags(curve, &c_flags);
  curve->set_config("--config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*search) {
      return run_search(s_data, s_target, s_header, s_flags, s_grid, s_out);
    }
    if (*predict) {
      return run_predict(p_model, p_data, p_target, p_header, p_grid, p_noise,
                         p_out);
    }
    if (*decompose) {
      return run_decompose(d_model, d_data, d_target, d_header, d_grid, d_out);
    }
    if (*synth) {
      return run_synth(y_kernel, y_n, y_d, y_snr, y_noiseless, y_lo, y_hi,
                       y_seed, y_out);
    }
    if (*recover) {
      return run_recover(r_spec, r_flags, recover, r_out);
    }
    if (*curve) {
      return run_curve(c_data, c_target, c_header, c_fractions, c_methods,
                       c_flags, c_out);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const kf::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const kf::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const kf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
