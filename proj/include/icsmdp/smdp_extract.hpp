#pragma once

#include <string>
#include <utility>
#include <vector>

#include "icsmdp/env.hpp"
#include "icsmdp/primitive_model.hpp"
#include "icsmdp/rng.hpp"
#include "icsmdp/smdp.hpp"

namespace icsmdp {

struct ExtractionResult {
  LatentSmdp latent;
  // Visitation weight over (interface state, agent) pairs at decision epochs,
  // normalized to sum 1 over visited cells; used to condition AIS aggregation.
  std::vector<double> pi_state_agent;
  // (interface state, agent) cells never visited; their kernel rows are zero.
  std::vector<std::pair<int, int>> unvisited;
  long long n_samples = 0;   // complete epochs tabulated (Monte-Carlo mode)
  std::string mode;          // "exact" or "monte-carlo"
};

// Exact extraction from a primitive-chain model.  The epoch-start occupancy
// over (hidden state, interface, running agent) is computed by power iteration
// on the epoch chain under a uniform successor rule (STOP restarts from the
// initial distribution; horizon truncation is ignored, which overweights long
// epochs slightly relative to finite-horizon rollouts).  Durations at or above
// tau_max are folded into the tau_max bucket.
ExtractionResult extract_latent_smdp_exact(const PrimitiveModel& model, int tau_max,
                                           double stationary_tol = 1e-12,
                                           int max_power_iterations = 20000);

// Monte-Carlo extraction: runs episodes under the given behavior policies
// (uniform defaults) and tabulates complete decision epochs.  Epochs cut by
// the horizon mid-invocation are discarded; epochs that end in STOP or whose
// handoff lands exactly on the horizon still contribute their (m', tau) sample.
ExtractionResult extract_latent_smdp_mc(Environment& env, long long n_epochs,
                                        int tau_max, Rng& rng,
                                        const SuccessorPolicy& successor_policy = {},
                                        const LocalPolicy& local_policy = {});

}  // namespace icsmdp
