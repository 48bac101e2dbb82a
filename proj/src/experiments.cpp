#include "kernelforge/experiments.hpp"

#include <Eigen/QR>
#include <charconv>
#include <cmath>
#include <fstream>

#include "kernelforge/expression_io.hpp"

namespace kf {

std::set<std::pair<Family, int>> base_factor_set(const KernelExpr& expr) {
  // Distributing products over sums never invents or drops leaf families,
  // so the factor set equals the leaf set of the original expression.
  std::set<std::pair<Family, int>> out;
  for_each_leaf(expr, [&](const BaseKernel& b) {
    out.insert({b.family, b.dim});
  });
  return out;
}

std::vector<RecoveryRow> run_recovery(const std::vector<RecoverySpec>& specs,
                                      const SearchConfig& config) {
  std::vector<RecoveryRow> rows;
  for (const auto& spec : specs) {
    const auto true_factors = base_factor_set(parse(spec.base.kernel_text));
    for (const std::uint64_t seed : spec.seeds) {
      RecoveryRow row;
      row.true_kernel = spec.base.kernel_text;
      row.snr = spec.base.snr;
      row.seed = seed;
      row.total_true = static_cast<int>(true_factors.size());
      try {
        SyntheticSpec gen = spec.base;
        gen.seed = seed;
        const SyntheticData synthetic = generate_synthetic(gen);
        SearchConfig run = config;
        run.seed = seed;
        const SearchTrace trace = greedy_search(synthetic.data, run);
        const double baseline = noise_only_bic(synthetic.data);
        if (!trace.has_winner() || trace.winner().bic >= baseline) {
          row.noise_only = true;
        } else {
          const ScoredCandidate& winner = trace.winner();
          row.recovered = winner.canonical;
          const auto found = base_factor_set(winner.expr);
          for (const auto& factor : true_factors) {
            if (found.count(factor)) ++row.matched;
          }
          row.all_matched = row.matched == row.total_true;
        }
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

namespace {

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const std::uint64_t a = std::stoull(text.substr(0, colon));
    const std::uint64_t b = std::stoull(text.substr(colon + 1));
    for (std::uint64_t s = a; s <= b; ++s) seeds.push_back(s);
    return seeds;
  }
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto comma = text.find(',', pos);
    const std::string tok =
        strip(text.substr(pos, comma == std::string::npos ? std::string::npos
                                                          : comma - pos));
    if (!tok.empty()) seeds.push_back(std::stoull(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return seeds;
}

std::vector<Family> parse_family_list(const std::string& text) {
  std::vector<Family> fams;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string tok =
        strip(text.substr(pos, comma == std::string::npos ? std::string::npos
                                                          : comma - pos));
    if (!tok.empty()) {
      Family f;
      if (!family_from_name(tok, &f)) {
        throw DataError("unknown kernel family '" + tok + "'");
      }
      fams.push_back(f);
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (fams.empty()) throw DataError("empty family list");
  return fams;
}

}  // namespace

std::vector<RecoverySpec> parse_recovery_file(const std::string& path,
                                              SearchConfig& config) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open spec file: " + path);
  std::vector<RecoverySpec> specs;
  RecoverySpec* current = nullptr;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = strip(line);
    if (t.empty() || t[0] == '#') continue;
    if (t == "[spec]") {
      specs.emplace_back();
      current = &specs.back();
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": expected key=value or [spec]");
    }
    const std::string key = strip(t.substr(0, eq));
    const std::string value = strip(t.substr(eq + 1));
    try {
      if (!current) {
        if (key == "depth") config.max_depth = std::stoi(value);
        else if (key == "families") config.base_families = parse_family_list(value);
        else if (key == "restarts") config.restarts_per_candidate = std::stoi(value);
        else if (key == "budget") config.max_gradient_evals = std::stoi(value);
        else if (key == "beam") config.beam_width = std::stoi(value);
        else if (key == "seed") config.seed = std::stoull(value);
        else throw DataError("unknown global key '" + key + "'");
      } else {
        if (key == "kernel") current->base.kernel_text = value;
        else if (key == "n") current->base.n = std::stoi(value);
        else if (key == "d") current->base.input_dim = std::stoi(value);
        else if (key == "snr") current->base.snr = std::stod(value);
        else if (key == "seeds") current->seeds = parse_seed_list(value);
        else if (key == "box") {
          const auto colon = value.find(':');
          if (colon == std::string::npos) throw DataError("box needs lo:hi");
          current->base.box_lo = std::stod(value.substr(0, colon));
          current->base.box_hi = std::stod(value.substr(colon + 1));
        } else {
          throw DataError("unknown spec key '" + key + "'");
        }
      }
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  for (const auto& s : specs) {
    if (s.base.kernel_text.empty()) {
      throw DataError(path + ": every [spec] needs a kernel");
    }
    if (s.seeds.empty()) {
      throw DataError(path + ": every [spec] needs seeds");
    }
  }
  if (specs.empty()) throw DataError(path + ": no [spec] sections");
  return specs;
}

namespace {

KernelExpr fixed_method_structure(const std::string& method, int input_dim) {
  const auto leaf = [](Family f) {
    return KernelExpr::base(BaseKernel::unset(f, 0));
  };
  if (method == "se") {
    std::vector<KernelExpr> factors;
    for (int d = 0; d < input_dim; ++d) {
      factors.push_back(KernelExpr::base(BaseKernel::unset(Family::SE, d)));
    }
    return factors.size() == 1 ? factors.front()
                               : KernelExpr::product(std::move(factors));
  }
  if (input_dim != 1) {
    throw DataError("method '" + method + "' is defined for 1-D data only");
  }
  if (method == "per") return leaf(Family::Per);
  if (method == "se+per") {
    return KernelExpr::sum({leaf(Family::SE), leaf(Family::Per)});
  }
  if (method == "se*per") {
    return KernelExpr::product({leaf(Family::SE), leaf(Family::Per)});
  }
  throw DataError("unknown learning-curve method '" + method + "'");
}

double linear_baseline_mse(const Dataset& train, const Dataset& full,
                           int split) {
  const Eigen::Index n = train.n();
  const Eigen::Index d = train.input_dim();
  Eigen::MatrixXd A(n, d + 1);
  A.col(0).setOnes();
  A.rightCols(d) = train.X;
  const Eigen::VectorXd w = A.colPivHouseholderQr().solve(train.raw_y());
  const Eigen::Index m = full.n() - split;
  Eigen::MatrixXd At(m, d + 1);
  At.col(0).setOnes();
  At.rightCols(d) = full.X.bottomRows(m);
  const Eigen::VectorXd pred = At * w;
  const Eigen::VectorXd truth = full.raw_y().tail(m);
  return (pred - truth).squaredNorm() / m;
}

double gp_method_mse(const KernelExpr& structure_or_winner, double log_noise,
                     const Dataset& train, const Dataset& full, int split) {
  const GpModel model{structure_or_winner, log_noise};
  const Eigen::Index m = full.n() - split;
  const PosteriorPrediction post =
      posterior_predict(model, train, full.X.bottomRows(m));
  const Eigen::VectorXd truth = full.raw_y().tail(m);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double pred = train.mean_to_original(post.mean[i]);
    sum += (pred - truth[i]) * (pred - truth[i]);
  }
  return sum / m;
}

}  // namespace

std::vector<CurveCell> run_learning_curve(const Dataset& data,
                                          const LearningCurveSpec& spec,
                                          const SearchConfig& config) {
  if (spec.fractions.empty()) throw DataError("no train fractions given");
  double prev = 0.0;
  for (double f : spec.fractions) {
    if (!(f > prev && f < 1.0)) {
      throw DataError("train fractions must be strictly increasing in (0,1)");
    }
    prev = f;
  }
  const int n = data.n();
  std::vector<CurveCell> cells;
  for (const double fraction : spec.fractions) {
    const int split = std::min<int>(
        std::max<int>(static_cast<int>(std::llround(fraction * n)), 1), n - 1);
    const Dataset train = data.slice(0, split);
    for (const std::string& method : spec.methods) {
      CurveCell cell;
      cell.fraction = fraction;
      cell.train_n = split;
      cell.method = method;
      try {
        if (method == "linear") {
          cell.mse = linear_baseline_mse(train, data, split);
        } else if (method == "searched") {
          SearchConfig run = config;
          const SearchTrace trace = greedy_search(train, run);
          if (!trace.has_winner()) throw Error("search produced no model");
          const ScoredCandidate& w = trace.winner();
          cell.mse = gp_method_mse(w.expr, w.log_noise, train, data, split);
        } else {
          const KernelExpr structure =
              fixed_method_structure(method, data.input_dim());
          Rng rng(config.seed,
                  "curve/" + method + "/" + std::to_string(fraction));
          const OptimizeResult fit =
              optimize_params(structure, train, std::nullopt, config, rng);
          if (!fit.feasible) throw Error(fit.failure);
          cell.mse = gp_method_mse(unpack(structure, fit.params),
                                   fit.log_noise, train, data, split);
        }
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

}  // namespace kf
