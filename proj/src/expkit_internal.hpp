#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "icsmdp/expkit.hpp"
#include "icsmdp/learner.hpp"

namespace icsmdp::detail {

// Strict numeric parsing: the whole token must be consumed.
double to_num(const std::string& s, const std::string& what);
long long to_int(const std::string& s, const std::string& what);

using KvMap = std::map<std::string, std::string>;

double map_num(const KvMap& m, const std::string& key, double fallback);
long long map_int(const KvMap& m, const std::string& key, long long fallback);
std::string map_str(const KvMap& m, const std::string& key, const std::string& fallback);
bool map_flag(const KvMap& m, const std::string& key, bool fallback);

// Axis values as numbers; throws std::invalid_argument on non-numeric labels.
std::vector<double> axis_numeric(const SweepAxis& axis);

// LearnerConfig from a [learner] section; seed is left at the default and
// must be set per cell.  Unknown keys are rejected.
LearnerConfig learner_from_map(const KvMap& m);

// Runs body(0..n_cells-1), in parallel when ICQ_WORKERS > 1.  The first
// exception thrown by any cell is rethrown after all workers stop.
void for_each_cell(int n_cells, const std::function<void(int)>& body);

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
  int n = 0;
};
MeanStderr mean_stderr(const std::vector<double>& xs);

// Least-squares slope of y on x.
double ls_slope(const std::vector<double>& x, const std::vector<double>& y);

// Summary statistics recomputable from rows alone; shared by the experiment
// drivers and summarize_rows.
nlohmann::json build_summary(const std::vector<RunRecord>& rows);

}  // namespace icsmdp::detail
