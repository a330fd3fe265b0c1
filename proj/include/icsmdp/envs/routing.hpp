#pragma once

#include <memory>
#include <vector>

#include "icsmdp/env.hpp"
#include "icsmdp/envs/graphs.hpp"

namespace icsmdp {

// Packet routing on a connected undirected graph, one agent per node.
//
// Interface state m = (location, destination, detain flag) encoded as
// (location * n + destination) * 2 + flag.  The active agent is always the
// node currently holding the packet.  Every primitive step is a decision
// step: the holder forwards to a neighbor (a handoff), detains the packet
// (self-loop; the flag records it), or STOPs when the packet sits at its
// destination.  Rewards: +1 on STOP at the destination, -step_cost per
// forward hop, 0 for a detain.
//
// The default observation (destination, flag) is exact at decision time:
// together with the identity of the active agent it pins down the interface
// state, so pooling by observation loses nothing.
struct RoutingSpec {
  GraphSpec graph;
  int horizon = 300;
  double discount = 0.99;
  double step_cost = 0.01;

  void validate() const;
};

class RoutingEnv : public Environment {
 public:
  explicit RoutingEnv(const RoutingSpec& spec);

  const EnvConfig& config() const override { return cfg_; }
  double r_max() const override { return 1.0; }
  int n_local_actions(AgentId) const override { return 1; }

  JointState reset(Rng& rng) const override;
  // Controlled start for evaluation rollouts.
  JointState reset_to(int source, int destination) const;

  StepOutcome step(const JointState& state, const JointAction& action,
                   Rng& rng) const override;

  std::vector<AgentId> admissible_successors(int interface) const override;
  std::vector<AgentId> decision_candidates(const JointState& state,
                                           Rng& rng) const override;
  std::vector<ObservationMap> default_observation_maps() const override;

  const RoutingSpec& spec() const { return spec_; }
  const Graph& graph() const { return graph_; }

  int encode(int location, int destination, int flag) const;
  int location_of(int interface) const;
  int destination_of(int interface) const;
  int flag_of(int interface) const;

 private:
  RoutingSpec spec_;
  Graph graph_;
  EnvConfig cfg_;
};

std::unique_ptr<RoutingEnv> build_routing(const RoutingSpec& spec);

}  // namespace icsmdp
