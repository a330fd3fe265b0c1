#include "icsmdp/ais_gap.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>

namespace icsmdp {
namespace {

struct Tally {
  long long count = 0;
  double reward_sum = 0.0;
  double gamma_tau_sum = 0.0;
  std::map<std::pair<int, int>, long long> next_counts;  // (m', tau)
};

}  // namespace

double alpha_from_gaps(double eps, double delta, double gamma_bar, double l_q) {
  if (!(gamma_bar >= 0.0 && gamma_bar < 1.0)) {
    throw std::domain_error("alpha_from_gaps: gamma_bar must lie in [0, 1)");
  }
  return (eps + gamma_bar * l_q * delta) / (1.0 - gamma_bar);
}

AisGapEstimate estimate_ais_gap(Environment& env,
                                const std::vector<ObservationMap>& maps,
                                long long n_epochs, double l_q, Rng& rng,
                                const SuccessorPolicy& successor_policy,
                                const LocalPolicy& local_policy) {
  const EnvConfig& cfg = env.config();
  if (static_cast<int>(maps.size()) != cfg.n_agents) {
    throw std::invalid_argument("estimate_ais_gap: one observation map per agent required");
  }
  const double gamma = cfg.discount;

  // Fine cells keyed by (m, agent); the observation the agent actually held at
  // the epoch start is recorded with the cell (it can depend on the private
  // state, so it is sampled, not recomputed from m).
  std::map<std::pair<int, int>, Tally> fine;
  std::map<std::pair<int, int>, Tally> pooled;  // (agent, obs)
  std::map<std::pair<int, int>, int> cell_obs;

  JointState state = env.reset(rng);
  int epoch_m = state.interface;
  int epoch_agent = state.active;
  int epoch_obs = maps[state.active](state.interface, state.privates[state.active]);
  double epoch_reward = 0.0;
  int epoch_tau = 0;
  long long collected = 0;
  const long long max_steps = n_epochs * static_cast<long long>(cfg.horizon) * 4 + 1000;

  for (long long step = 0; collected < n_epochs && step < max_steps; ++step) {
    const auto candidates = env.decision_candidates(state, rng);
    AgentId successor = state.active;
    if (!candidates.empty()) {
      if (successor_policy) {
        const int cur_obs =
            maps[state.active](state.interface, state.privates[state.active]);
        successor = successor_policy(state.active, cur_obs, candidates, rng);
      } else {
        successor = candidates[rng.uniform_int(static_cast<int>(candidates.size()))];
      }
    }
    const int local =
        local_policy ? local_policy(state.active, state.interface,
                                    env.n_local_actions(state.active), rng)
                     : env.sample_internal_action(state, rng);
    const StepOutcome outcome = env.step(state, JointAction{local, successor}, rng);
    epoch_reward += std::pow(gamma, epoch_tau) * outcome.reward;
    epoch_tau += 1;

    if (outcome.handoff) {
      const std::pair<int, int> fine_key{epoch_m, epoch_agent};
      const std::pair<int, int> pooled_key{epoch_agent, epoch_obs};
      cell_obs[fine_key] = epoch_obs;
      const std::pair<int, int> next_key{outcome.next.interface, epoch_tau};
      for (Tally* t : {&fine[fine_key], &pooled[pooled_key]}) {
        t->count += 1;
        t->reward_sum += epoch_reward;
        t->gamma_tau_sum += std::pow(gamma, epoch_tau);
        t->next_counts[next_key] += 1;
      }
      collected += 1;
    }

    if (outcome.terminated) {
      state = env.reset(rng);
    } else {
      state = outcome.next;
    }
    if (outcome.handoff || outcome.terminated) {
      epoch_m = state.interface;
      epoch_agent = state.active;
      epoch_obs = maps[state.active](state.interface, state.privates[state.active]);
      epoch_reward = 0.0;
      epoch_tau = 0;
    }
  }

  if (collected == 0) {
    throw std::runtime_error("estimate_ais_gap: no complete decision epoch observed");
  }

  AisGapEstimate est;
  est.n_epochs = collected;
  est.l_q = l_q;
  est.n_cells = static_cast<int>(fine.size());
  for (const auto& [key, cell] : fine) {
    const auto& [m, agent] = key;
    const int obs = cell_obs.at(key);
    const Tally& pool = pooled.at({agent, obs});

    const double reward_gap =
        std::abs(cell.reward_sum / cell.count - pool.reward_sum / pool.count);

    double tv = 0.0;
    for (const auto& [next_key, count] : pool.next_counts) {
      const auto it = cell.next_counts.find(next_key);
      const double p_cell =
          it == cell.next_counts.end()
              ? 0.0
              : static_cast<double>(it->second) / static_cast<double>(cell.count);
      const double p_pool = static_cast<double>(count) / static_cast<double>(pool.count);
      tv += std::abs(p_cell - p_pool);
    }
    for (const auto& [next_key, count] : cell.next_counts) {
      if (pool.next_counts.find(next_key) == pool.next_counts.end()) {
        tv += static_cast<double>(count) / static_cast<double>(cell.count);
      }
    }
    tv *= 0.5;

    est.cells.push_back({m, agent, obs, cell.count, reward_gap, tv});
    est.eps_hat = std::max(est.eps_hat, reward_gap);
    est.delta_hat = std::max(est.delta_hat, tv);
    est.gamma_bar_hat =
        std::max(est.gamma_bar_hat, cell.gamma_tau_sum / cell.count);
  }
  est.alpha_hat = alpha_from_gaps(est.eps_hat, est.delta_hat, est.gamma_bar_hat, l_q);
  return est;
}

nlohmann::json to_json(const AisGapEstimate& est) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : est.cells) {
    cells.push_back({{"interface_state", c.interface_state},
                     {"agent", c.agent},
                     {"obs", c.obs},
                     {"count", c.count},
                     {"reward_gap", c.reward_gap},
                     {"kernel_tv", c.kernel_tv}});
  }
  return {{"eps_hat", est.eps_hat},
          {"delta_hat", est.delta_hat},
          {"gamma_bar_hat", est.gamma_bar_hat},
          {"l_q", est.l_q},
          {"alpha_hat", est.alpha_hat},
          {"n_epochs", est.n_epochs},
          {"n_cells", est.n_cells},
          {"cells", cells}};
}

}  // namespace icsmdp
