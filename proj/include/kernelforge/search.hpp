#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kernelforge/gp.hpp"
#include "kernelforge/kernel_expr.hpp"
#include "kernelforge/rng.hpp"

namespace kf {

struct SearchConfig {
  std::vector<Family> base_families = {Family::SE, Family::Per, Family::Lin,
                                       Family::RQ};
  int max_depth = 4;              // expansion rounds after the base round
  int restarts_per_candidate = 3;
  int max_gradient_evals = 200;   // optimizer budget per restart
  int beam_width = 1;
  std::uint64_t seed = 0;
  bool dedup = true;
  bool parallel = true;  // candidate evaluation order never affects results
};

// One structure-edit step applied to a parent expression. New leaves carry
// NaN parameters until the optimizer initializes them.
struct Expansion {
  KernelExpr expr;
  std::string op;  // "replace", "add" or "multiply"
};

// Every single application of the production rules (replacement, addition,
// multiplication over all subexpressions, base families and dimensions),
// before canonicalization or deduplication.
std::vector<Expansion> enumerate_expansions(const KernelExpr& parent,
                                            const std::vector<Family>& families,
                                            int input_dim);

// enumerate_expansions with each result canonicalized and deduplicated by
// canonical string (first occurrence kept).
std::vector<Expansion> expand(const KernelExpr& parent,
                              const std::vector<Family>& families,
                              int input_dim);

// Starting values for parameters the parent expression already had. Entries
// with mask false (or NaN values) are drawn fresh each restart.
struct InheritedParams {
  ParamVector values;
  std::vector<bool> mask;
  std::optional<double> log_noise;
};

struct OptimizeResult {
  ParamVector params;
  double log_noise = 0.0;
  double lml = 0.0;
  bool feasible = false;
  std::string failure;
  int gradient_evals = 0;
};

// Fits hyperparameters by maximizing the log marginal likelihood with
// nonlinear CG from `restarts_per_candidate` starting points. Inherited
// parameters start at their previous values in every restart; newly
// introduced ones are redrawn from data-scaled initialization distributions.
OptimizeResult optimize_params(const KernelExpr& expr, const Dataset& data,
                               const std::optional<InheritedParams>& inherited,
                               const SearchConfig& config, Rng& rng);

// Schwarz form, lower is better; the parameter count includes the noise
// variance.
double bic_score(double lml_max, const KernelExpr& expr, int n);

// Maximum-likelihood iid-noise baseline: the score a kernel must beat for
// the data to support any structure at all.
double noise_only_bic(const Dataset& data);

struct ScoredCandidate {
  KernelExpr expr;          // structure with optimized parameters embedded
  std::string canonical;
  ParamVector params;
  double log_noise = 0.0;
  double lml = 0.0;
  double bic = 0.0;
  std::string parent;       // canonical string of the expanded expression
  std::string op;           // "root", "replace", "add", "multiply"
  bool feasible = false;
  std::string failure;
  double seconds = 0.0;
};

struct DepthRecord {
  std::vector<ScoredCandidate> candidates;
  std::vector<int> frontier;  // indexes into candidates, best first
};

struct SearchTrace {
  std::vector<DepthRecord> depths;
  int winner_depth = -1;
  int winner_index = -1;
  bool improved_until_end = true;  // false when the search stopped early

  bool has_winner() const { return winner_depth >= 0; }
  const ScoredCandidate& winner() const {
    return depths[winner_depth].candidates[winner_index];
  }
};

// Greedy structure search: the base round scores every family on every
// dimension, then each round expands the frontier (top beam_width by BIC),
// optimizes every candidate with parameter inheritance, and keeps the best
// BIC ever seen as the winner. Stops at max_depth or when a round fails to
// improve the incumbent.
SearchTrace greedy_search(const Dataset& data, const SearchConfig& config);

}  // namespace kf
