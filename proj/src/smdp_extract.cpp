#include "icsmdp/smdp_extract.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace icsmdp {
namespace {

void apply_kernel(const std::vector<PrimitiveModel::SparseRow>& rows,
                  const std::vector<double>& in, std::vector<double>& out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t z = 0; z < in.size(); ++z) {
    const double mass = in[z];
    if (mass <= 0.0) continue;
    for (const auto& [target, p] : rows[z]) out[target] += mass * p;
  }
}

// Duration-slice weights: P(tau = s+1) with the residual folded into the last
// slice, so they always sum to one.
std::vector<double> duration_weights(double p, int tau_max) {
  std::vector<double> w(tau_max, 0.0);
  double survive = 1.0;  // (1-p)^s
  for (int s = 0; s < tau_max; ++s) {
    w[s] = (s == tau_max - 1) ? survive : p * survive;
    survive *= (1.0 - p);
  }
  return w;
}

LatentSmdp make_empty_latent(int card_interface, int n_agents, int tau_max,
                             double gamma) {
  LatentSmdp latent;
  latent.n_agents = n_agents;
  latent.smdp.n_states = card_interface;
  latent.smdp.n_actions = n_agents + 1;
  latent.smdp.tau_max = tau_max;
  latent.smdp.gamma = gamma;
  latent.smdp.allocate();
  return latent;
}

}  // namespace

ExtractionResult extract_latent_smdp_exact(const PrimitiveModel& model, int tau_max,
                                           double stationary_tol,
                                           int max_power_iterations) {
  if (tau_max < 1) throw std::invalid_argument("extract: tau_max must be >= 1");
  const int n_z = model.n_z();
  const int N = model.n_agents;
  const int M = model.card_interface;
  const double p = model.p_handoff;
  const auto w_tau = duration_weights(p, tau_max);

  std::vector<double> gamma_pow(tau_max, 1.0);
  for (int s = 1; s < tau_max; ++s) gamma_pow[s] = gamma_pow[s - 1] * model.discount;

  // --- Epoch-start occupancy over (z, agent) via power iteration. ---
  // Successor rule: uniform over the other agents plus STOP; STOP restarts the
  // chain from the initial distribution with a uniformly drawn active agent.
  std::vector<double> occ(static_cast<std::size_t>(n_z) * N, 0.0);
  for (int z = 0; z < n_z; ++z) {
    for (int i = 0; i < N; ++i) occ[static_cast<std::size_t>(z) * N + i] =
        model.rho0_z[z] / N;
  }

  std::vector<double> slice(n_z), mix(n_z), tmp(n_z), epoch_end(n_z);
  std::vector<double> next_occ(occ.size());
  const int n_candidates = N;  // (N-1) other agents + STOP
  for (int iter = 0; iter < max_power_iterations; ++iter) {
    std::fill(next_occ.begin(), next_occ.end(), 0.0);
    double restart_mass = 0.0;
    for (int i = 0; i < N; ++i) {
      double agent_mass = 0.0;
      for (int z = 0; z < n_z; ++z) {
        slice[z] = occ[static_cast<std::size_t>(z) * N + i];
        agent_mass += slice[z];
      }
      if (agent_mass <= 0.0) continue;
      // Weighted mixture over pre-handoff positions, then one handoff step.
      std::fill(mix.begin(), mix.end(), 0.0);
      for (int s = 0; s < tau_max; ++s) {
        for (int z = 0; z < n_z; ++z) mix[z] += w_tau[s] * slice[z];
        if (s + 1 < tau_max) {
          apply_kernel(model.self_kernel[i], slice, tmp);
          slice.swap(tmp);
        }
      }
      apply_kernel(model.hand_kernel[i], mix, epoch_end);
      for (int z = 0; z < n_z; ++z) {
        const double mass = epoch_end[z];
        if (mass <= 0.0) continue;
        const double share = mass / n_candidates;
        for (int j = 0; j < N; ++j) {
          if (j != i) next_occ[static_cast<std::size_t>(z) * N + j] += share;
        }
        restart_mass += share;  // STOP branch
      }
    }
    if (restart_mass > 0.0) {
      for (int z = 0; z < n_z; ++z) {
        const double add = restart_mass * model.rho0_z[z] / N;
        for (int i = 0; i < N; ++i) next_occ[static_cast<std::size_t>(z) * N + i] += add;
      }
    }
    double diff = 0.0;
    for (std::size_t k = 0; k < occ.size(); ++k) diff += std::abs(next_occ[k] - occ[k]);
    occ.swap(next_occ);
    if (diff < stationary_tol) break;
  }

  // --- Per-cell kernel and reward. ---
  ExtractionResult out;
  out.mode = "exact";
  out.latent = make_empty_latent(M, N, tau_max, model.discount);
  for (int m = 0; m < M; ++m) {
    auto& adm = out.latent.smdp.admissible[m];
    for (int i = 0; i < N; ++i) adm.push_back(i);
    adm.push_back(out.latent.stop_action());
  }
  out.pi_state_agent.assign(static_cast<std::size_t>(M) * N, 0.0);

  std::vector<double> start(n_z);
  for (int m = 0; m < M; ++m) {
    for (int i = 0; i < N; ++i) {
      double cell_mass = 0.0;
      std::fill(start.begin(), start.end(), 0.0);
      for (int x = 0; x < model.card_latent; ++x) {
        const int z = model.z_of(x, m);
        const double mass = occ[static_cast<std::size_t>(z) * N + i];
        start[z] = mass;
        cell_mass += mass;
      }
      out.pi_state_agent[static_cast<std::size_t>(m) * N + i] = cell_mass;
      if (cell_mass <= 1e-300) {
        out.unvisited.emplace_back(m, i);
        continue;
      }
      for (double& v : start) v /= cell_mass;

      double r_acc = 0.0;
      std::copy(start.begin(), start.end(), slice.begin());
      double survive = 1.0;  // (1-p)^s
      for (int s = 0; s < tau_max; ++s) {
        double r_step = 0.0;
        for (int z = 0; z < n_z; ++z) {
          if (slice[z] > 0.0) r_step += slice[z] * model.reward[z];
        }
        r_acc += gamma_pow[s] * survive * r_step;
        r_acc -= model.handoff_cost * w_tau[s] * gamma_pow[s];

        apply_kernel(model.hand_kernel[i], slice, epoch_end);
        for (int z = 0; z < n_z; ++z) {
          const double mass = epoch_end[z];
          if (mass <= 0.0) continue;
          out.latent.smdp.k(m, i, model.interface_of_z(z), s + 1) += w_tau[s] * mass;
        }
        if (s + 1 < tau_max) {
          apply_kernel(model.self_kernel[i], slice, tmp);
          slice.swap(tmp);
        }
        survive *= (1.0 - p);
      }
      out.latent.smdp.r(m, i) = r_acc;
    }
  }

  double total = 0.0;
  for (double v : out.pi_state_agent) total += v;
  if (total > 0.0) {
    for (double& v : out.pi_state_agent) v /= total;
  }
  out.latent.smdp.validate_rows(1e-7);
  return out;
}

ExtractionResult extract_latent_smdp_mc(Environment& env, long long n_epochs,
                                        int tau_max, Rng& rng,
                                        const SuccessorPolicy& successor_policy,
                                        const LocalPolicy& local_policy) {
  if (tau_max < 1) throw std::invalid_argument("extract: tau_max must be >= 1");
  const EnvConfig& cfg = env.config();
  const int M = cfg.card_interface;
  const int N = cfg.n_agents;
  const double gamma = cfg.discount;

  struct CellStats {
    long long count = 0;
    double reward_sum = 0.0;
    std::map<std::pair<int, int>, long long> next_counts;  // (m', tau)
  };
  std::vector<CellStats> cells(static_cast<std::size_t>(M) * N);

  JointState state = env.reset(rng);
  int epoch_m = state.interface;
  int epoch_agent = state.active;
  double epoch_reward = 0.0;
  int epoch_tau = 0;
  long long collected = 0;
  const long long max_steps = n_epochs * static_cast<long long>(cfg.horizon) * 4 + 1000;

  for (long long step = 0; collected < n_epochs && step < max_steps; ++step) {
    const auto candidates = env.decision_candidates(state, rng);
    AgentId successor = state.active;
    if (!candidates.empty()) {
      if (successor_policy) {
        successor = successor_policy(state.active, state.interface, candidates, rng);
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
      auto& cell = cells[static_cast<std::size_t>(epoch_m) * N + epoch_agent];
      cell.count += 1;
      cell.reward_sum += epoch_reward;
      cell.next_counts[{outcome.next.interface, std::min(epoch_tau, tau_max)}] += 1;
      collected += 1;
    }
    // A mid-invocation horizon cut leaves the accumulators unrecorded.

    if (outcome.terminated) {
      state = env.reset(rng);
    } else {
      state = outcome.next;
    }
    if (outcome.handoff || outcome.terminated) {
      epoch_m = state.interface;
      epoch_agent = state.active;
      epoch_reward = 0.0;
      epoch_tau = 0;
    }
  }

  ExtractionResult out;
  out.mode = "monte-carlo";
  out.n_samples = collected;
  out.latent = make_empty_latent(M, N, tau_max, gamma);
  for (int m = 0; m < M; ++m) {
    auto& adm = out.latent.smdp.admissible[m];
    for (AgentId c : env.admissible_successors(m)) {
      adm.push_back(LatentSmdp::action_index(c, N));
    }
  }
  out.pi_state_agent.assign(static_cast<std::size_t>(M) * N, 0.0);

  for (int m = 0; m < M; ++m) {
    for (int i = 0; i < N; ++i) {
      const auto& cell = cells[static_cast<std::size_t>(m) * N + i];
      if (cell.count == 0) {
        out.unvisited.emplace_back(m, i);
        continue;
      }
      out.pi_state_agent[static_cast<std::size_t>(m) * N + i] =
          static_cast<double>(cell.count);
      out.latent.smdp.r(m, i) = cell.reward_sum / cell.count;
      for (const auto& [key, count] : cell.next_counts) {
        out.latent.smdp.k(m, i, key.first, key.second) +=
            static_cast<double>(count) / cell.count;
      }
    }
  }
  if (collected > 0) {
    for (double& v : out.pi_state_agent) v /= static_cast<double>(collected);
  }
  out.latent.smdp.validate_rows(1e-7);
  return out;
}

}  // namespace icsmdp
