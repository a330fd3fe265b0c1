#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "icsmdp/observation_map.hpp"
#include "icsmdp/rng.hpp"
#include "icsmdp/types.hpp"

namespace icsmdp {

struct PrimitiveModel;  // see primitive_model.hpp

// Environment contract.
//
// Conventions shared by all environments:
//  * admissible_successors(m) is a pure function of the interface state and
//    always lists live agents in ascending id order with kStop (if present)
//    last.
//  * epoch_actions(state) is the decision-epoch action set at the current
//    state: admissible successors excluding the active agent itself.  It is
//    what a bootstrap max ranges over.
//  * decision_candidates(state, rng) is the per-step successor choice set the
//    behavior faces.  An empty result means no decision happens this step and
//    the successor is forced to the active agent (a self-loop).  Environments
//    with exogenous handoff timing consume environment randomness here.
//  * Private states of inactive agents must be preserved verbatim by step().
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvConfig& config() const = 0;
  virtual double r_max() const = 0;

  virtual int n_local_actions(AgentId agent) const = 0;
  // True when agents learn their local actions; false when the environment
  // supplies fixed internal policies.
  virtual bool adaptable() const { return false; }

  virtual JointState reset(Rng& rng) const = 0;
  virtual StepOutcome step(const JointState& state, const JointAction& action,
                           Rng& rng) const = 0;

  virtual std::vector<AgentId> admissible_successors(int interface) const = 0;

  virtual std::vector<AgentId> epoch_actions(const JointState& state) const {
    std::vector<AgentId> out;
    for (AgentId c : admissible_successors(state.interface))
      if (c != state.active) out.push_back(c);
    return out;
  }

  virtual std::vector<AgentId> decision_candidates(const JointState& state,
                                                   Rng& rng) const {
    (void)rng;
    return epoch_actions(state);
  }

  // Local action from the fixed internal policy (pre-configured regime).
  virtual int sample_internal_action(const JointState& state, Rng& rng) const {
    (void)state;
    (void)rng;
    return 0;
  }

  // Canonical observation maps, one per agent.
  virtual std::vector<ObservationMap> default_observation_maps() const = 0;

  // Exact primitive kernel, when the environment can expose one.
  virtual const PrimitiveModel* primitive_model() const { return nullptr; }

 protected:
  // Shared step() preamble: usage and admissibility checks.
  void check_step_args(const JointState& state, const JointAction& action) const {
    if (state.active == kStop || state.step >= config().horizon)
      throw std::logic_error("Environment::step: stepping a terminated state");
    bool ok = false;
    if (action.successor == state.active) {
      ok = true;  // self-loop is always allowed
    } else {
      for (AgentId c : admissible_successors(state.interface))
        if (c == action.successor) { ok = true; break; }
    }
    if (!ok) throw std::domain_error("Environment::step: inadmissible successor");
    if (action.local < 0 || action.local >= n_local_actions(state.active))
      throw std::domain_error("Environment::step: local action out of range");
  }
};

// Behavior policy for successor choices: (agent, obs, candidates, rng) -> choice.
using SuccessorPolicy =
    std::function<AgentId(AgentId agent, int obs, const std::vector<AgentId>& candidates,
                          Rng& rng)>;

// Behavior policy for local actions in adaptable environments.
using LocalPolicy = std::function<int(AgentId agent, int obs, int n_actions, Rng& rng)>;

inline SuccessorPolicy uniform_successor_policy() {
  return [](AgentId, int, const std::vector<AgentId>& cands, Rng& rng) {
    return cands[rng.uniform_int(static_cast<int>(cands.size()))];
  };
}

inline LocalPolicy uniform_local_policy() {
  return [](AgentId, int, int n_actions, Rng& rng) { return rng.uniform_int(n_actions); };
}

}  // namespace icsmdp
