#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "kernelforge/search.hpp"
#include "kernelforge/synthetic.hpp"

namespace kf {

// ---- Synthetic structure recovery -------------------------------------------

// (family, dimension) pairs appearing as factors anywhere in the
// sum-of-products form of the expression.
std::set<std::pair<Family, int>> base_factor_set(const KernelExpr& expr);

struct RecoverySpec {
  SyntheticSpec base;               // seed field ignored
  std::vector<std::uint64_t> seeds;
};

struct RecoveryRow {
  std::string true_kernel;
  double snr = 0.0;
  std::uint64_t seed = 0;
  std::string recovered;   // canonical structure of the winner
  int matched = 0;         // true factors found in the winner
  int total_true = 0;
  bool noise_only = false; // nothing beat the iid-noise BIC
  bool all_matched = false;
  std::string error;
};

// Runs the search on data generated from each (spec, seed) pair and reports
// whether the winner's structure contains every base factor of the true
// kernel. Failures are recorded per row, never aborting the batch.
std::vector<RecoveryRow> run_recovery(const std::vector<RecoverySpec>& specs,
                                      const SearchConfig& config);

// Reads a recovery batch file: global key=value lines configure the search
// (depth, families, restarts, budget, beam, seed), each [spec] section one
// generating kernel (kernel, n, d, snr, box=lo:hi, seeds=a:b or a,b,c).
// Applies the global keys onto `config`.
std::vector<RecoverySpec> parse_recovery_file(const std::string& path,
                                              SearchConfig& config);

// ---- Extrapolation learning curves -------------------------------------------

struct LearningCurveSpec {
  std::vector<double> fractions = {0.1, 0.2, 0.3, 0.4, 0.5,
                                   0.6, 0.7, 0.8, 0.9};
  // "searched", "se", "per", "se+per", "se*per", "linear"
  std::vector<std::string> methods = {"searched", "se",     "per",
                                      "se+per",   "se*per", "linear"};
};

struct CurveCell {
  double fraction = 0.0;
  int train_n = 0;
  std::string method;
  double mse = 0.0;  // original target units
  bool ok = false;
  std::string error;
};

// For each fraction: fit every method on the contiguous prefix, predict the
// suffix, record the MSE in original units. Fixed-kernel methods reuse the
// search optimizer with the structure frozen; "linear" is ordinary least
// squares on the raw inputs.
std::vector<CurveCell> run_learning_curve(const Dataset& data,
                                          const LearningCurveSpec& spec,
                                          const SearchConfig& config);

}  // namespace kf
