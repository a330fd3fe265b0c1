#pragma once

#include <memory>
#include <vector>

#include "icsmdp/env.hpp"
#include "icsmdp/primitive_model.hpp"

namespace icsmdp {

// Seeded synthetic workflow environment.
//
// Latent state x = (core, station, fresh):
//  * core follows a sparse seeded kernel per (agent, local action),
//  * station is a slow component that can only shift at handoff steps; the
//    shift probability is q_quick when the finishing invocation lasted a
//    single step (fresh bit set) and q_slow otherwise, so frequent handoffs
//    churn the deep task state while long focused runs stabilize it,
//  * fresh flags the first step of an invocation (present only when
//    n_stations > 1; it is what makes the station rule Markov).
//
// The interface update is driven by (x', active agent) and offset by the
// station, so the station is visible through the interface at full retention
// and progressively aliased as retention drops.  When interface_memory is
// set the interface kernel conditions on the current interface state instead
// (used for small instances with a trivial latent layer, making the
// decision-epoch process exactly Markov).
//
// Handoff timing is exogenous: each step hands off with probability
// p_handoff, giving geometric invocation durations truncated at the horizon.
// At a handoff instant the successor is chosen among the other agents plus
// STOP; between handoffs the active agent self-loops.
//
// Rewards are drawn once per (x, m) cell from uniform[-1, 1], with an extra
// -handoff_cost on handoff steps.  Private states are trivial.
struct SyntheticSpec {
  int n_agents = 10;
  int n_core = 15;
  int n_stations = 4;       // card_latent = n_core * n_stations * (n_stations > 1 ? 2 : 1)
  int card_interface = 50;
  int horizon = 60;
  double discount = 0.9;
  double rho = 1.0;         // retention of the default observation maps
  double p_handoff = 0.3;
  double handoff_cost = 0.01;
  double q_quick = 0.5;     // station shift probability after a 1-step invocation
  double q_slow = 0.08;     // station shift probability after a longer invocation
  int out_degree = 4;       // sparse kernel out-degree
  int n_local_actions = 3;
  bool interface_memory = false;
  // When > 0, the interface axis is split into this many contiguous blocks and
  // each block carries a shared reward bias on top of the per-cell noise, so
  // the value of an interface symbol is predictable from the symbol itself and
  // coarsened observations lose control value smoothly.  0 keeps rewards
  // independent across cells.
  int reward_blocks = 0;
  // When > 0 (and interface_memory is set), interface transitions only reach
  // symbols within this ring distance of the current one.  Local moves give
  // reward blocks a dwell time of several steps, so which agent steers the
  // interface -- and whether to stop -- genuinely depends on the current
  // symbol.  0 draws targets from the whole interface space.
  int iface_window = 0;
  std::uint64_t kernel_seed = 1;
  std::uint64_t reward_seed = 2;

  int card_latent() const {
    return n_core * n_stations * (n_stations > 1 ? 2 : 1);
  }
};

class SyntheticEnv : public Environment {
 public:
  explicit SyntheticEnv(const SyntheticSpec& spec);

  const EnvConfig& config() const override { return cfg_; }
  double r_max() const override { return 1.0 + spec_.handoff_cost; }
  int n_local_actions(AgentId) const override { return spec_.n_local_actions; }

  JointState reset(Rng& rng) const override;
  StepOutcome step(const JointState& state, const JointAction& action,
                   Rng& rng) const override;

  std::vector<AgentId> admissible_successors(int interface) const override;
  std::vector<AgentId> decision_candidates(const JointState& state,
                                           Rng& rng) const override;
  int sample_internal_action(const JointState& state, Rng& rng) const override;
  std::vector<ObservationMap> default_observation_maps() const override;

  const PrimitiveModel* primitive_model() const override;

  const SyntheticSpec& spec() const { return spec_; }

  // Table accessors for determinism tests.
  const std::vector<double>& reward_table() const { return reward_; }
  const std::vector<PrimitiveModel::SparseRow>& core_rows() const { return core_k_; }
  const std::vector<PrimitiveModel::SparseRow>& interface_rows() const { return iface_k_; }

  // Latent id layout.
  int latent_id(int core, int station, int fresh) const;
  int core_of(int latent) const;
  int station_of(int latent) const;
  int fresh_of(int latent) const;

 private:
  using Row = PrimitiveModel::SparseRow;  // (target, prob)

  SyntheticSpec spec_;
  EnvConfig cfg_;
  int fresh_levels_ = 1;
  int station_offset_ = 1;
  std::vector<Row> core_k_;    // [(agent * n_actions + a) * n_core + core]
  std::vector<Row> iface_k_;   // memory: [agent * card_interface + m]; else [agent * n_core + core]
  std::vector<double> reward_; // [latent * card_interface + m]
  std::vector<std::vector<double>> internal_policy_;  // [agent][action]
  mutable std::unique_ptr<PrimitiveModel> model_;     // built on demand

  int sample_row(const Row& row, Rng& rng) const;
  const Row& iface_row(AgentId agent, int core_next, int interface) const;
};

std::unique_ptr<SyntheticEnv> build_synthetic(const SyntheticSpec& spec);

// Seeded family of small instances used for oracle-equivalence checks:
// trivial latent layer, interface-memory kernels, geometric handoffs.
SyntheticSpec small_instance_spec(std::uint64_t seed, int n_agents, int card_interface);

}  // namespace icsmdp
