#pragma once

#include <string>
#include <vector>

#include "icsmdp/env.hpp"
#include "icsmdp/observation_map.hpp"
#include "icsmdp/rng.hpp"

#include "json.hpp"

namespace icsmdp {

// Empirical abstraction-quality estimate for a set of observation maps,
// tabulated from on-policy decision epochs.  For each visited (interface
// state m, agent i) cell the estimator compares the cell's epoch-reward mean
// and next-(m', tau) distribution against the pooled statistics of its
// observation class (i, phi_i(m)); the gaps are the worst cases over cells.
struct AisGapCellReport {
  int interface_state = 0;
  int agent = 0;
  int obs = 0;
  long long count = 0;
  double reward_gap = 0.0;
  double kernel_tv = 0.0;
};

struct AisGapEstimate {
  double eps_hat = 0.0;       // max reward-aggregation gap
  double delta_hat = 0.0;     // max next-distribution total variation
  double gamma_bar_hat = 0.0; // max per-cell mean of gamma^tau
  double l_q = 0.0;
  double alpha_hat = 0.0;     // (eps + gamma_bar * l_q * delta) / (1 - gamma_bar)
  long long n_epochs = 0;     // complete epochs tabulated
  int n_cells = 0;            // distinct (m, agent) cells visited
  std::vector<AisGapCellReport> cells;
};

nlohmann::json to_json(const AisGapEstimate& est);

// Combines component gaps into the quality scalar; throws std::domain_error
// unless gamma_bar is in [0, 1).
double alpha_from_gaps(double eps, double delta, double gamma_bar, double l_q);

// Runs episodes under the given behavior (uniform defaults; empty local
// policy means the environment's internal action rule) and tabulates complete
// epochs.  Epochs cut mid-invocation by the horizon are discarded; epochs
// ending in STOP still contribute.  Throws std::runtime_error if no complete
// epoch was observed.
AisGapEstimate estimate_ais_gap(Environment& env,
                                const std::vector<ObservationMap>& maps,
                                long long n_epochs, double l_q, Rng& rng,
                                const SuccessorPolicy& successor_policy = {},
                                const LocalPolicy& local_policy = {});

}  // namespace icsmdp
