#pragma once

#include <optional>
#include <string>
#include <vector>

#include "icsmdp/observation_map.hpp"
#include "icsmdp/types.hpp"

namespace icsmdp {

// Dense finite semi-Markov decision process over abstract state and action
// ids.  kernel(s, a, s', tau) for tau in [1, tau_max]; an admissible action
// whose kernel row has zero mass is terminal (its value is its reward).
//
// Action-id convention for decision-epoch processes built from environments:
// action a in [0, n_agents) means "agent a runs the next invocation" and
// action n_agents is STOP (terminal, zero reward).
struct DiscreteSmdp {
  int n_states = 0;
  int n_actions = 0;
  int tau_max = 0;
  double gamma = 0.0;
  std::vector<double> kernel;              // [((s*A + a)*S + s')*tau_max + tau-1]
  std::vector<double> reward;              // [s*A + a]
  std::vector<std::vector<int>> admissible;  // per state, ascending action ids

  void allocate();
  std::size_t kidx(int s, int a, int s2, int tau) const {
    return ((static_cast<std::size_t>(s) * n_actions + a) * n_states + s2) *
               tau_max + (tau - 1);
  }
  double& k(int s, int a, int s2, int tau) { return kernel[kidx(s, a, s2, tau)]; }
  double k(int s, int a, int s2, int tau) const { return kernel[kidx(s, a, s2, tau)]; }
  double& r(int s, int a) { return reward[static_cast<std::size_t>(s) * n_actions + a]; }
  double r(int s, int a) const {
    return reward[static_cast<std::size_t>(s) * n_actions + a];
  }

  double row_mass(int s, int a) const;
  // Contraction factor: max over admissible non-terminal rows of sum k * gamma^tau.
  double gamma_bar() const;
  // Rows must sum to 1 (live) or 0 (terminal) within tol.
  void validate_rows(double tol = 1e-9) const;
};

// Latent decision-epoch SMDP: states are interface ids, actions follow the
// agent/STOP convention above.
struct LatentSmdp {
  DiscreteSmdp smdp;
  int n_agents = 0;

  int stop_action() const { return n_agents; }
  static int action_index(AgentId c, int n_agents) {
    return is_stop(c) ? n_agents : c;
  }
};

struct ValueIterationResult {
  std::vector<double> q;       // [s*A + a]
  std::vector<double> v;       // [s]
  std::vector<int> policy;     // argmax action per state (-1 if no admissible)
  int iterations = 0;
  double residual = 0.0;
  double gamma_bar = 0.0;
};

// Iterates T(Q)(s,a) = R(s,a) + sum_{s',tau} kernel * gamma^tau * max_{a'} Q(s',a')
// to the sup-norm fixed point.
ValueIterationResult smdp_value_iteration(const DiscreteSmdp& smdp, double tol = 1e-10,
                                          int max_iterations = 1000000);

// Decision-form solution over (running agent, state) pairs: the successor is
// committed before the post-handoff state is realized, which is exactly the
// fixed point a decentralized learner trains toward.
//   Q(i, m, c') = R(m, i) + sum_{m',tau} P(m',tau|m,i) gamma^tau
//                 max_{c'' in adm(m') \ {c'}} Q(c', m', c'')
// with Q(i, m, STOP) = R(m, i).
struct DecisionFormResult {
  int n_agents = 0;
  int n_states = 0;
  int n_actions = 0;           // n_agents + 1, STOP last
  std::vector<double> q;       // [(i*S + m)*n_actions + a]
  std::vector<double> v;       // [i*S + m] = max over epoch actions
  int iterations = 0;
  double residual = 0.0;

  double qval(int agent, int state, int action) const {
    return q[(static_cast<std::size_t>(agent) * n_states + state) * n_actions + action];
  }
};

DecisionFormResult solve_decision_form(const LatentSmdp& latent, double tol = 1e-10,
                                       int max_iterations = 1000000);

// AIS-induced SMDP over the disjoint union of per-agent observation spaces.
// State (i, o) means "agent i holds an artifact whose class under phi_i is o";
// the action names the agent that runs next.  Built by aggregating a latent
// SMDP through observation maps with conditioning weights w(m | i, o).
struct AisSmdp {
  DiscreteSmdp smdp;
  int n_agents = 0;
  std::vector<int> state_offset;           // per agent
  std::vector<int> card_obs;               // per agent
  std::vector<std::vector<double>> weights;  // [ais_state][m], rows sum to 1 or 0
  std::vector<int> excluded;               // ais states with no weight mass

  int state_of(int agent, int obs) const { return state_offset[agent] + obs; }
  int stop_action() const { return n_agents; }
};

// weight_state_agent: visitation weight over (interface state, agent) pairs,
// size n_states * n_agents, used to condition m given (i, o); pass empty for
// uniform-over-preimage weights.  Observation maps are evaluated with a zero
// private state.
AisSmdp aggregate_to_ais(const LatentSmdp& latent,
                         const std::vector<ObservationMap>& maps,
                         const std::vector<double>& weight_state_agent = {});

// Half-range Lipschitz scale of a value table.
double lipschitz_constant(const std::vector<double>& values);

struct ValueGapCheck {
  double lhs = 0.0;        // max |V*_lat(m) - V_ais(i, phi_i(m))|
  double eps_phi = 0.0;    // max reward-aggregation error
  double delta_phi = 0.0;  // max total-variation kernel-aggregation error
  double gamma_bar = 0.0;
  double l_v = 0.0;
  double rhs = 0.0;        // (eps + gamma_bar * l_v * delta) / (1 - gamma_bar)
  bool holds = false;
};

// Verifies the aggregation value bound on exact tables.  If l_v_override is
// set it replaces the computed half-range constant (a zero forces a negative
// control).
ValueGapCheck ais_value_gap_check(const LatentSmdp& latent, const AisSmdp& ais,
                                  const std::vector<ObservationMap>& maps,
                                  std::optional<double> l_v_override = std::nullopt,
                                  double tol = 1e-9);

}  // namespace icsmdp
