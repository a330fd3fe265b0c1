#include "icsmdp/envs/routing.hpp"

#include <stdexcept>
#include <string>

namespace icsmdp {

void RoutingSpec::validate() const {
  graph.validate();
  if (horizon < 1) throw std::invalid_argument("RoutingSpec: horizon must be >= 1");
  if (!(discount > 0.0 && discount < 1.0))
    throw std::invalid_argument("RoutingSpec: discount must lie in (0,1)");
  if (step_cost < 0.0) throw std::invalid_argument("RoutingSpec: step_cost must be >= 0");
}

RoutingEnv::RoutingEnv(const RoutingSpec& spec) : spec_(spec), graph_(build_graph(spec.graph)) {
  spec_.validate();
  const int n = graph_.n_nodes;
  cfg_.n_agents = n;
  cfg_.card_latent = 1;
  cfg_.card_interface = n * n * 2;
  cfg_.horizon = spec_.horizon;
  cfg_.discount = spec_.discount;
  cfg_.seed = spec_.graph.seed;
  cfg_.params["family"] = to_string(spec_.graph.family);
  cfg_.params["step_cost"] = std::to_string(spec_.step_cost);
  cfg_.validate();
}

int RoutingEnv::encode(int location, int destination, int flag) const {
  const int n = graph_.n_nodes;
  if (location < 0 || location >= n || destination < 0 || destination >= n ||
      flag < 0 || flag > 1)
    throw std::out_of_range("RoutingEnv::encode: field out of range");
  return (location * n + destination) * 2 + flag;
}

int RoutingEnv::location_of(int interface) const {
  return interface / (2 * graph_.n_nodes);
}

int RoutingEnv::destination_of(int interface) const {
  return (interface / 2) % graph_.n_nodes;
}

int RoutingEnv::flag_of(int interface) const { return interface % 2; }

JointState RoutingEnv::reset(Rng& rng) const {
  const int n = graph_.n_nodes;
  const int source = rng.uniform_int(n);
  int destination = rng.uniform_int(n - 1);
  if (destination >= source) destination += 1;
  return reset_to(source, destination);
}

JointState RoutingEnv::reset_to(int source, int destination) const {
  const int n = graph_.n_nodes;
  if (source < 0 || source >= n || destination < 0 || destination >= n)
    throw std::out_of_range("RoutingEnv::reset_to: node out of range");
  if (source == destination)
    throw std::invalid_argument("RoutingEnv::reset_to: source == destination");
  JointState s;
  s.latent = 0;
  s.interface = encode(source, destination, 0);
  s.privates.assign(n, 0);
  s.active = source;
  s.step = 0;
  return s;
}

StepOutcome RoutingEnv::step(const JointState& state, const JointAction& action,
                             Rng& rng) const {
  (void)rng;  // the routing dynamics are deterministic
  check_step_args(state, action);
  const int loc = location_of(state.interface);
  const int dest = destination_of(state.interface);
  if (state.active != loc)
    throw std::logic_error("RoutingEnv::step: active agent does not hold the packet");

  StepOutcome out;
  out.next = state;
  out.next.step = state.step + 1;
  out.handoff = action.successor != state.active;

  if (is_stop(action.successor)) {
    // STOP is admissible only at the destination.
    out.reward = 1.0;
    out.next.active = kStop;
    out.terminated = true;
    return out;
  }
  if (action.successor == state.active) {
    out.reward = 0.0;  // detain
    out.next.interface = encode(loc, dest, 1);
  } else {
    out.reward = -spec_.step_cost;  // forward one hop
    out.next.interface = encode(action.successor, dest, 0);
    out.next.active = action.successor;
  }
  if (out.next.step >= spec_.horizon) {
    out.terminated = true;
    out.next.active = kStop;
  }
  return out;
}

std::vector<AgentId> RoutingEnv::admissible_successors(int interface) const {
  const int loc = location_of(interface);
  const int dest = destination_of(interface);
  std::vector<AgentId> out;
  out.reserve(graph_.neighbors[loc].size() + 2);
  bool self_inserted = false;
  for (int v : graph_.neighbors[loc]) {
    if (!self_inserted && loc < v) {
      out.push_back(loc);
      self_inserted = true;
    }
    out.push_back(v);
  }
  if (!self_inserted) out.push_back(loc);
  if (loc == dest) out.push_back(kStop);
  return out;
}

std::vector<AgentId> RoutingEnv::decision_candidates(const JointState& state,
                                                     Rng& rng) const {
  (void)rng;
  return admissible_successors(state.interface);
}

std::vector<ObservationMap> RoutingEnv::default_observation_maps() const {
  const int n = graph_.n_nodes;
  std::vector<ObservationMap> maps;
  maps.reserve(n);
  for (int i = 0; i < n; ++i) {
    maps.push_back(ObservationMap(
        i, 2 * n, [n](int m, int) { return m % (2 * n); }, "destination-flag"));
  }
  return maps;
}

std::unique_ptr<RoutingEnv> build_routing(const RoutingSpec& spec) {
  return std::make_unique<RoutingEnv>(spec);
}

}  // namespace icsmdp
