#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace icsmdp {

// Successor ids are agent indices 0..N-1; kStop is the distinguished
// terminate-successor.  A successor id is "live" iff it is >= 0.
using AgentId = int;
inline constexpr AgentId kStop = -1;

inline bool is_stop(AgentId c) { return c == kStop; }

// Full joint state of an interface-constrained process.  Only the environment
// and oracle-side code may look inside; learner code receives observation ids
// produced by an ObservationMap.
struct JointState {
  int latent = 0;               // latent task state id (never observed)
  int interface = 0;            // interface state id (shared artifact)
  std::vector<int> privates;    // one private state id per agent
  AgentId active = 0;           // currently active agent; kStop once stopped
  int step = 0;                 // primitive step index t in [0, horizon]
};

// One primitive decision: a local action plus the successor choice.
struct JointAction {
  int local = 0;                // local action id for the active agent
  AgentId successor = 0;        // next active agent, or kStop
};

struct StepOutcome {
  double reward = 0.0;
  JointState next;
  bool handoff = false;         // successor differs from the previous active agent
  bool terminated = false;      // STOP chosen or horizon reached
};

// Static description of an environment instance.
struct EnvConfig {
  int n_agents = 0;
  int card_latent = 0;
  int card_interface = 0;
  int horizon = 0;
  double discount = 0.0;        // gamma in (0,1)
  std::uint64_t seed = 0;
  std::map<std::string, std::string> params;  // per-environment extras

  void validate() const {
    if (n_agents < 1) throw std::invalid_argument("EnvConfig: n_agents must be >= 1");
    if (card_latent < 1) throw std::invalid_argument("EnvConfig: card_latent must be >= 1");
    if (card_interface < 1)
      throw std::invalid_argument("EnvConfig: card_interface must be >= 1");
    if (horizon < 1) throw std::invalid_argument("EnvConfig: horizon must be >= 1");
    if (!(discount > 0.0 && discount < 1.0))
      throw std::invalid_argument("EnvConfig: discount must lie in (0,1)");
  }
};

}  // namespace icsmdp
