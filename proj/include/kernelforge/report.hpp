#pragma once

#include <map>
#include <string>
#include <vector>

#include "kernelforge/decomposition.hpp"
#include "kernelforge/search.hpp"

namespace kf {

// Self-contained run record: everything needed to reproduce the predictions
// from the stored expression. All dumped values are in original target
// units; y_mean/y_std document the transform the model was fit under.

struct CandidateRecord {
  std::string expression;    // canonical, no parameters
  std::string with_params;
  std::string parent;
  std::string op;
  double lml = 0.0;
  double bic = 0.0;
  double noise_variance = 0.0;
  double seconds = 0.0;
  bool feasible = false;
  std::string failure;
};

struct DepthDump {
  std::vector<CandidateRecord> candidates;
  std::vector<int> frontier;
};

struct ComponentDump {
  std::string expression;  // "noise" for the noise component
  Eigen::VectorXd mean, variance, lower, upper;
};

struct CrossDiag {
  int i = 0, j = 0;
  Eigen::VectorXd values;
};

struct RunReport {
  std::string schema = "kernelforge-report/1";
  std::map<std::string, std::string> config;
  std::string source;
  int n = 0;
  int input_dim = 0;
  double y_mean = 0.0;
  double y_std = 1.0;

  std::vector<DepthDump> depths;
  int winner_depth = -1;
  bool stopped_early = false;

  std::string model_expression;  // with parameters
  double noise_variance = 0.0;   // linear space
  double lml = 0.0;
  double bic = 0.0;

  Eigen::MatrixXd grid;  // query points, m x D
  Eigen::VectorXd pred_mean, pred_variance;
  std::vector<ComponentDump> components;
  std::vector<CrossDiag> cross_diagonals;
  Eigen::VectorXd residuals;  // at training inputs
  std::map<std::string, double> metrics;
};

// Default query grid: for 1-D inputs, `points` equispaced values spanning
// [min - 0.1*range, max + 0.25*range] (covering the extrapolation region);
// otherwise the training inputs themselves.
Eigen::MatrixXd default_query_grid(const Dataset& data, int points = 400);

// Predictions, decomposition dumps, residuals and metrics for one model at
// the given query grid.
RunReport build_model_report(const GpModel& model, const Dataset& data,
                             const Eigen::MatrixXd& grid,
                             const std::map<std::string, std::string>& config_echo);

// build_model_report for the trace's winning model, plus the full
// per-depth candidate dump.
RunReport build_run_report(const Dataset& data, const SearchTrace& trace,
                           const std::map<std::string, std::string>& config_echo,
                           int grid_points = 400);

enum class ReportFormat { Json, CsvBundle };

// Json writes <dir>/report.json. CsvBundle writes full.csv, one
// component_XX.csv per component (columns x..., mean, lower, upper),
// residuals.csv and metrics.csv.
void emit_report(const RunReport& report, const std::string& dir,
                 ReportFormat format);

// The slice of a stored report needed to re-run predictions.
struct LoadedModel {
  KernelExpr kernel;            // fitted parameters embedded
  double noise_variance = 0.0;
  Eigen::MatrixXd grid;
  Eigen::VectorXd stored_mean, stored_variance;

  GpModel model() const { return {kernel, std::log(noise_variance)}; }
};

LoadedModel load_report(const std::string& path);

}  // namespace kf
