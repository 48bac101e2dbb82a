#include "kernelforge/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

#include "kernelforge/expression_io.hpp"
#include "kernelforge/optimizer.hpp"

namespace kf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kBicTieBand = 1e-9;

std::vector<Family> sorted_families(std::vector<Family> f) {
  std::sort(f.begin(), f.end());
  f.erase(std::unique(f.begin(), f.end()), f.end());
  return f;
}

// Rebuilds `root` with the node at `path` (child indexes from the root)
// replaced by `replacement`.
KernelExpr replace_at(const KernelExpr& root, const std::vector<int>& path,
                      std::size_t depth, const KernelExpr& replacement) {
  if (depth == path.size()) return replacement;
  std::vector<KernelExpr> children = root.children();
  children[path[depth]] =
      replace_at(children[path[depth]], path, depth + 1, replacement);
  return root.kind() == KernelExpr::Kind::Sum
             ? KernelExpr::sum(std::move(children))
             : KernelExpr::product(std::move(children));
}

void collect_paths(const KernelExpr& node, std::vector<int>& path,
                   std::vector<std::vector<int>>& out) {
  out.push_back(path);
  if (node.is_base()) return;
  for (int i = 0; i < static_cast<int>(node.children().size()); ++i) {
    path.push_back(i);
    collect_paths(node.children()[i], path, out);
    path.pop_back();
  }
}

const KernelExpr& node_at(const KernelExpr& root, const std::vector<int>& path) {
  const KernelExpr* node = &root;
  for (int i : path) node = &node->children()[i];
  return *node;
}

}  // namespace

std::vector<Expansion> enumerate_expansions(const KernelExpr& parent,
                                            const std::vector<Family>& families,
                                            int input_dim) {
  const std::vector<Family> fams = sorted_families(families);
  std::vector<std::vector<int>> paths;
  std::vector<int> scratch;
  collect_paths(parent, scratch, paths);

  std::vector<Expansion> out;
  for (const auto& path : paths) {
    const KernelExpr& node = node_at(parent, path);
    if (node.is_base()) {
      // Replacement keeps the dimension and excludes the identity swap.
      for (Family f : fams) {
        if (f == node.leaf().family) continue;
        const KernelExpr leaf =
            KernelExpr::base(BaseKernel::unset(f, node.leaf().dim));
        out.push_back({replace_at(parent, path, 0, leaf), "replace"});
      }
    }
    for (Family f : fams) {
      for (int d = 0; d < input_dim; ++d) {
        const KernelExpr leaf = KernelExpr::base(BaseKernel::unset(f, d));
        // Construction flattening turns Sum(Sum(e...), k) into the appended
        // form, matching the production rules for composite nodes.
        out.push_back(
            {replace_at(parent, path, 0, KernelExpr::sum({node, leaf})), "add"});
      }
    }
    for (Family f : fams) {
      for (int d = 0; d < input_dim; ++d) {
        const KernelExpr leaf = KernelExpr::base(BaseKernel::unset(f, d));
        out.push_back(
            {replace_at(parent, path, 0, KernelExpr::product({node, leaf})),
             "multiply"});
      }
    }
  }
  return out;
}

std::vector<Expansion> expand(const KernelExpr& parent,
                              const std::vector<Family>& families,
                              int input_dim) {
  std::vector<Expansion> out;
  std::unordered_set<std::string> seen;
  for (auto& e : enumerate_expansions(parent, families, input_dim)) {
    KernelExpr canon = canonical_form(e.expr);
    std::string key = canonical_string(canon);
    if (seen.insert(key).second) {
      out.push_back({std::move(canon), std::move(e.op)});
    }
  }
  return out;
}

namespace {

struct InitScales {
  Eigen::VectorXd range;  // per dimension, floored at a positive value
  Eigen::VectorXd mid;
  double sqrt_d = 1.0;
};

InitScales init_scales(const Dataset& data) {
  InitScales s;
  const int d = data.input_dim();
  s.range.resize(d);
  s.mid.resize(d);
  for (int j = 0; j < d; ++j) {
    const double lo = data.X.col(j).minCoeff();
    const double hi = data.X.col(j).maxCoeff();
    s.range[j] = (hi - lo) > 0.0 ? (hi - lo) : 1.0;
    s.mid[j] = 0.5 * (lo + hi);
  }
  s.sqrt_d = std::sqrt(static_cast<double>(std::max(d, 1)));
  return s;
}

// Data-scaled draw for one newly introduced parameter.
double draw_parameter(Family family, int index, int dim, const InitScales& s,
                      Rng& rng) {
  switch (family) {
    case Family::SE:
      return index == 0 ? rng.normal(0.0, 1.0)
                        : rng.normal(std::log(s.range[dim] / (2.0 * s.sqrt_d)), 1.0);
    case Family::RQ:
      if (index == 0) return rng.normal(0.0, 1.0);
      if (index == 1)
        return rng.normal(std::log(s.range[dim] / (2.0 * s.sqrt_d)), 1.0);
      return rng.normal(0.0, 1.0);  // log alpha
    case Family::Per: {
      if (index == 0) return rng.normal(0.0, 1.0);
      if (index == 1)
        return rng.normal(std::log(s.range[dim] / (2.0 * s.sqrt_d)), 1.0);
      // Integer divisors of the input range dodge harmonic local optima.
      const double k = static_cast<double>(rng.integer(2, 10));
      return rng.normal(std::log(s.range[dim] / k), 0.5);
    }
    case Family::Lin:
      if (index == 2) return rng.normal(s.mid[dim], s.range[dim] / 4.0);
      return rng.normal(0.0, 1.0);  // log sb, log sv
  }
  return rng.normal(0.0, 1.0);
}

}  // namespace

OptimizeResult optimize_params(const KernelExpr& expr, const Dataset& data,
                               const std::optional<InheritedParams>& inherited,
                               const SearchConfig& config, Rng& rng) {
  if (data.n() < 1) throw DataError("cannot optimize on an empty dataset");
  const int kp = param_count(expr);
  if (inherited) {
    if (static_cast<int>(inherited->values.size()) != kp ||
        static_cast<int>(inherited->mask.size()) != kp) {
      throw ParamSizeError(kp, static_cast<int>(inherited->values.size()));
    }
  }

  // Leaf metadata aligned with the packed layout.
  std::vector<Family> fam_of(kp);
  std::vector<int> index_of(kp), dim_of(kp);
  {
    int t = 0;
    for_each_leaf(expr, [&](const BaseKernel& b) {
      for (int i = 0; i < family_param_count(b.family); ++i, ++t) {
        fam_of[t] = b.family;
        index_of[t] = i;
        dim_of[t] = b.dim;
      }
    });
  }
  const InitScales scales = init_scales(data);

  LmlObjective objective(expr, data);
  CgOptions cg;
  cg.max_gradient_evals = config.max_gradient_evals;

  bool any_random = !inherited || inherited->log_noise == std::nullopt;
  if (inherited) {
    for (int t = 0; t < kp; ++t) {
      if (!inherited->mask[t] || !std::isfinite(inherited->values[t])) {
        any_random = true;
      }
    }
  }

  OptimizeResult best;
  best.lml = -kInf;
  const int restarts = std::max(1, config.restarts_per_candidate);
  for (int r = 0; r < restarts; ++r) {
    Eigen::VectorXd theta(kp + 1);
    for (int t = 0; t < kp; ++t) {
      const bool use_inherited = inherited && inherited->mask[t] &&
                                 std::isfinite(inherited->values[t]);
      theta[t] = use_inherited
                     ? inherited->values[t]
                     : draw_parameter(fam_of[t], index_of[t], dim_of[t], scales, rng);
    }
    theta[kp] = (inherited && inherited->log_noise)
                    ? *inherited->log_noise
                    : rng.normal(std::log(0.1), 1.0);

    const CgResult run = minimize_cg(
        [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
          return objective(x, g);
        },
        std::move(theta), cg);
    best.gradient_evals += run.gradient_evals;
    if (std::isfinite(run.value) && -run.value > best.lml) {
      best.lml = -run.value;
      best.params.assign(run.x.data(), run.x.data() + kp);
      best.log_noise = run.x[kp];
      best.feasible = true;
    }
    if (!any_random) break;  // further restarts would repeat the same start
  }
  if (!best.feasible) {
    best.failure = "conditioning failed at every restart for " +
                   canonical_string(expr);
  }
  return best;
}

double bic_score(double lml_max, const KernelExpr& expr, int n) {
  const int k = param_count(expr) + 1;
  return -2.0 * lml_max + k * std::log(static_cast<double>(n));
}

double noise_only_bic(const Dataset& data) {
  const int n = data.n();
  const double sigma2 = std::max(data.y.squaredNorm() / n, 1e-300);
  const double lml =
      -0.5 * n * (std::log(2.0 * std::numbers::pi * sigma2) + 1.0);
  return -2.0 * lml + std::log(static_cast<double>(n));
}

namespace {

struct PendingCandidate {
  KernelExpr expr;  // canonical structure, NaN parameters where new
  std::string canonical;
  std::string parent;
  std::string op;
  std::optional<InheritedParams> inherited;
};

// Index of the best candidate under the tie-break rule: smallest BIC, ties
// within a small band resolved by parameter count then canonical string.
int select_best(const std::vector<ScoredCandidate>& candidates,
                const std::vector<bool>& taken) {
  int best = -1;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (taken[i] || !candidates[i].feasible) continue;
    if (best < 0) {
      best = static_cast<int>(i);
      continue;
    }
    const auto& a = candidates[i];
    const auto& b = candidates[best];
    if (std::abs(a.bic - b.bic) <= kBicTieBand) {
      const int pa = param_count(a.expr), pb = param_count(b.expr);
      if (pa < pb || (pa == pb && a.canonical < b.canonical)) {
        best = static_cast<int>(i);
      }
    } else if (a.bic < b.bic) {
      best = static_cast<int>(i);
    }
  }
  return best;
}

std::vector<int> select_frontier(const std::vector<ScoredCandidate>& candidates,
                                 int beam_width) {
  std::vector<bool> taken(candidates.size(), false);
  std::vector<int> frontier;
  for (int k = 0; k < beam_width; ++k) {
    const int best = select_best(candidates, taken);
    if (best < 0) break;
    taken[best] = true;
    frontier.push_back(best);
  }
  return frontier;
}

DepthRecord evaluate_batch(std::vector<PendingCandidate>& pending,
                           const Dataset& data, const SearchConfig& config) {
  DepthRecord record;
  record.candidates.resize(pending.size());
  const int count = static_cast<int>(pending.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) if (config.parallel)
#endif
  for (int i = 0; i < count; ++i) {
    PendingCandidate& p = pending[i];
    ScoredCandidate& c = record.candidates[i];
    const auto started = std::chrono::steady_clock::now();
    c.canonical = p.canonical;
    c.parent = p.parent;
    c.op = p.op;
    try {
      Rng rng(config.seed, p.canonical);
      const OptimizeResult fit =
          optimize_params(p.expr, data, p.inherited, config, rng);
      c.feasible = fit.feasible;
      c.failure = fit.failure;
      if (fit.feasible) {
        c.params = fit.params;
        c.log_noise = fit.log_noise;
        c.lml = fit.lml;
        c.bic = bic_score(fit.lml, p.expr, data.n());
        c.expr = unpack(p.expr, fit.params);
      } else {
        c.expr = p.expr;
        c.lml = -kInf;
        c.bic = kInf;
      }
    } catch (const std::exception& e) {
      c.expr = p.expr;
      c.feasible = false;
      c.failure = e.what();
      c.lml = -kInf;
      c.bic = kInf;
    }
    c.seconds = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - started)
                    .count();
  }
  record.frontier = select_frontier(record.candidates, config.beam_width);
  return record;
}

}  // namespace

SearchTrace greedy_search(const Dataset& data, const SearchConfig& config) {
  if (data.n() < 1) throw DataError("search needs a non-empty dataset");
  if (config.max_depth < 0 || config.beam_width < 1 ||
      config.restarts_per_candidate < 1 || config.max_gradient_evals < 1) {
    throw Error("invalid search configuration");
  }
  const std::vector<Family> families = sorted_families(config.base_families);
  if (families.empty()) throw Error("search needs at least one base family");
  const int input_dim = data.input_dim();

  SearchTrace trace;
  double incumbent_bic = kInf;

  // Base round: every family on every dimension.
  std::vector<PendingCandidate> pending;
  for (Family f : families) {
    for (int d = 0; d < input_dim; ++d) {
      PendingCandidate p;
      p.expr = KernelExpr::base(BaseKernel::unset(f, d));
      p.canonical = canonical_string(p.expr);
      p.op = "root";
      pending.push_back(std::move(p));
    }
  }

  for (int depth = 0; depth <= config.max_depth; ++depth) {
    if (depth > 0) {
      const DepthRecord& prev = trace.depths.back();
      if (prev.frontier.empty()) break;
      pending.clear();
      std::unordered_set<std::string> seen;
      for (int fi : prev.frontier) {
        const ScoredCandidate& parent = prev.candidates[fi];
        if (!parent.feasible) continue;
        for (auto& e : expand(parent.expr, families, input_dim)) {
          PendingCandidate p;
          p.canonical = canonical_string(e.expr);
          if (config.dedup && !seen.insert(p.canonical).second) continue;
          InheritedParams inh;
          inh.values = pack(e.expr);
          inh.mask.resize(inh.values.size());
          for (std::size_t t = 0; t < inh.values.size(); ++t) {
            inh.mask[t] = std::isfinite(inh.values[t]);
          }
          inh.log_noise = parent.log_noise;
          p.expr = std::move(e.expr);
          p.parent = parent.canonical;
          p.op = std::move(e.op);
          p.inherited = std::move(inh);
          pending.push_back(std::move(p));
        }
      }
      if (pending.empty()) break;
    }

    trace.depths.push_back(evaluate_batch(pending, data, config));
    const DepthRecord& record = trace.depths.back();

    // Track the best candidate ever seen.
    if (!record.frontier.empty()) {
      const int bi = record.frontier.front();
      const ScoredCandidate& best = record.candidates[bi];
      if (best.bic < incumbent_bic - kBicTieBand) {
        incumbent_bic = best.bic;
        trace.winner_depth = static_cast<int>(trace.depths.size()) - 1;
        trace.winner_index = bi;
      } else if (depth > 0) {
        trace.improved_until_end = false;
        break;
      }
    } else if (depth > 0) {
      trace.improved_until_end = false;
      break;
    }
  }
  return trace;
}

}  // namespace kf
