#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace icsmdp {

// Version string folded into config hashes so results from different builds
// never silently mix.
inline constexpr const char* kCodeVersion = "icsmdp-0.1.0";

// ---------------------------------------------------------------------------
// Declarative experiment configuration, parsed from a sectioned key-value
// text file:
//
//   [experiment]
//   id = t1-ais-gap
//   seeds = 1 2 3 4 5
//   output_dir = out/t1
//   eval_episodes = 400
//   [axis]
//   name = rho
//   grid = 1.0 0.9 0.8
//   [env]
//   n_agents = 10
//   [learner]
//   budget_epochs = 3300
//
// Lines starting with '#' or ';' are comments.  Unknown sections or keys in
// [experiment]/[axis] are rejected; [env] and [learner] are free-form maps
// interpreted by the experiment implementations.
struct SweepAxis {
  std::string name;
  std::vector<std::string> values;
};

struct ExperimentConfig {
  std::string experiment;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "out";
  int eval_episodes = 400;
  std::map<std::string, std::string> protocol;  // extra [experiment] keys
  SweepAxis axis;
  std::map<std::string, std::string> env;
  std::map<std::string, std::string> learner;

  // Throws std::invalid_argument on unrecognized experiment id, empty grid,
  // duplicate seeds, or malformed numbers.
  void validate() const;

  // Canonical text form: every semantic field in a fixed order (output
  // directory excluded, so relocating results does not change identity).
  std::string canonical() const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// 16-hex-digit FNV-1a over the canonical form plus the code version.
std::string config_hash(const ExperimentConfig& cfg);

const std::vector<std::string>& known_experiments();

// ---------------------------------------------------------------------------
// One row per (axis value, seed).  Metrics that do not apply to an
// experiment are NaN.  `aux_metric` is experiment-specific: the
// shortest-path fraction for routing, the trivially-satisfiable-target
// accuracy for cpu.
struct RunRecord {
  std::string experiment;
  std::string axis_name;
  std::string axis_label;
  double axis_value = 0.0;
  std::uint64_t seed = 0;
  double error = 0.0;
  double gap_v = 0.0;
  double alpha_hat = 0.0;
  double t_mix = 0.0;
  double accuracy = 0.0;
  double aux_metric = 0.0;
  long long epochs_used = 0;
  double wall_seconds = 0.0;
  std::string hash;
  bool flagged = false;  // divergence or tolerance failure; excluded from stats
};

std::string run_record_csv_header();
std::string to_csv_row(const RunRecord& r);
std::vector<RunRecord> read_run_csv(const std::string& path);
void write_run_csv(const std::string& path, const std::vector<RunRecord>& rows);

// ---------------------------------------------------------------------------
struct ExperimentResult {
  std::vector<RunRecord> rows;
  nlohmann::json summary;
  bool flagged = false;  // any flagged row
};

// Dispatches on cfg.experiment; writes nothing (callers persist results).
ExperimentResult run_experiment(const ExperimentConfig& cfg);

ExperimentResult run_t1(const ExperimentConfig& cfg);
ExperimentResult run_t2(const ExperimentConfig& cfg);
ExperimentResult run_routing(const ExperimentConfig& cfg);
ExperimentResult run_cpu(const ExperimentConfig& cfg);
ExperimentResult run_oracle_check(const ExperimentConfig& cfg);

// Recomputes the summary from rows alone (same statistics run_* produce).
// Throws std::runtime_error when rows mix config hashes or experiments.
nlohmann::json summarize_rows(const std::vector<RunRecord>& rows);

// Runs results to disk: <dir>/runs.csv and <dir>/summary.json.
void persist_result(const std::string& dir, const ExperimentResult& result);

// ---------------------------------------------------------------------------
// Plot-ready (x, y, y-stderr) triples aggregated over seeds.  Figures:
// "error", "accuracy", "tmix" (y vs. axis value) and "t1-scatter"
// (y = value gap vs. x = seed-averaged alpha).
struct PlotSeries {
  std::vector<std::string> label;
  std::vector<double> x, y, y_stderr;
};

PlotSeries plot_data(const std::vector<RunRecord>& rows, const std::string& figure);
std::string plot_csv(const PlotSeries& series);

// Worker count from the ICQ_WORKERS environment variable (default 1).
int worker_count();

}  // namespace icsmdp
