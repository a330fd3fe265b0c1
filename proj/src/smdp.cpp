#include "icsmdp/smdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>

namespace icsmdp {
namespace {

constexpr std::size_t kMaxKernelEntries = 80'000'000;

std::vector<double> discount_powers(double gamma, int tau_max) {
  std::vector<double> g(static_cast<std::size_t>(tau_max) + 1, 1.0);
  for (int t = 1; t <= tau_max; ++t) g[t] = g[t - 1] * gamma;
  return g;
}

// Collapses the duration axis: D(s, a, s') = sum_tau kernel * gamma^tau.
std::vector<double> collapse_durations(const DiscreteSmdp& smdp) {
  const auto g = discount_powers(smdp.gamma, smdp.tau_max);
  std::vector<double> d(static_cast<std::size_t>(smdp.n_states) * smdp.n_actions *
                            smdp.n_states,
                        0.0);
  std::size_t src = 0;
  std::size_t dst = 0;
  for (int s = 0; s < smdp.n_states; ++s) {
    for (int a = 0; a < smdp.n_actions; ++a) {
      for (int s2 = 0; s2 < smdp.n_states; ++s2, ++dst) {
        double acc = 0.0;
        for (int tau = 1; tau <= smdp.tau_max; ++tau, ++src) {
          acc += smdp.kernel[src] * g[tau];
        }
        d[dst] = acc;
      }
    }
  }
  return d;
}

}  // namespace

void DiscreteSmdp::allocate() {
  if (n_states <= 0 || n_actions <= 0 || tau_max <= 0) {
    throw std::invalid_argument("DiscreteSmdp: dimensions must be positive");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("DiscreteSmdp: gamma must lie in (0, 1)");
  }
  const std::size_t entries = static_cast<std::size_t>(n_states) * n_actions *
                              n_states * tau_max;
  if (entries > kMaxKernelEntries) {
    throw std::invalid_argument("DiscreteSmdp: dense kernel would exceed memory budget");
  }
  kernel.assign(entries, 0.0);
  reward.assign(static_cast<std::size_t>(n_states) * n_actions, 0.0);
  admissible.assign(n_states, {});
}

double DiscreteSmdp::row_mass(int s, int a) const {
  double mass = 0.0;
  for (int s2 = 0; s2 < n_states; ++s2) {
    for (int tau = 1; tau <= tau_max; ++tau) mass += k(s, a, s2, tau);
  }
  return mass;
}

double DiscreteSmdp::gamma_bar() const {
  const auto g = discount_powers(gamma, tau_max);
  double worst = 0.0;
  for (int s = 0; s < n_states; ++s) {
    for (int a : admissible[s]) {
      double acc = 0.0;
      double mass = 0.0;
      for (int s2 = 0; s2 < n_states; ++s2) {
        for (int tau = 1; tau <= tau_max; ++tau) {
          const double p = k(s, a, s2, tau);
          mass += p;
          acc += p * g[tau];
        }
      }
      if (mass > 0.5) worst = std::max(worst, acc);
    }
  }
  return worst;
}

void DiscreteSmdp::validate_rows(double tol) const {
  for (int s = 0; s < n_states; ++s) {
    for (int a : admissible[s]) {
      const double mass = row_mass(s, a);
      if (std::abs(mass - 1.0) > tol && std::abs(mass) > tol) {
        throw std::runtime_error("DiscreteSmdp: kernel row for state " +
                                 std::to_string(s) + " action " + std::to_string(a) +
                                 " has mass " + std::to_string(mass));
      }
    }
  }
}

ValueIterationResult smdp_value_iteration(const DiscreteSmdp& smdp, double tol,
                                          int max_iterations) {
  const int S = smdp.n_states;
  const int A = smdp.n_actions;
  const auto d = collapse_durations(smdp);
  ValueIterationResult out;
  out.gamma_bar = smdp.gamma_bar();
  out.q.assign(static_cast<std::size_t>(S) * A, 0.0);
  out.v.assign(S, 0.0);
  out.policy.assign(S, -1);

  std::vector<double> v_next(S, 0.0);
  double residual = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter < max_iterations && residual > tol; ++iter) {
    residual = 0.0;
    for (int s = 0; s < S; ++s) {
      double best = 0.0;
      bool any = false;
      for (int a : smdp.admissible[s]) {
        const std::size_t base = (static_cast<std::size_t>(s) * A + a) * S;
        double q = smdp.r(s, a);
        for (int s2 = 0; s2 < S; ++s2) q += d[base + s2] * out.v[s2];
        out.q[static_cast<std::size_t>(s) * A + a] = q;
        if (!any || q > best) {
          best = q;
          any = true;
        }
      }
      v_next[s] = any ? best : 0.0;
      residual = std::max(residual, std::abs(v_next[s] - out.v[s]));
    }
    out.v.swap(v_next);
  }
  out.iterations = iter;
  out.residual = residual;

  // One consistent final backup so Q matches V exactly, then the greedy rule
  // (ties resolve to the lowest action id).
  for (int s = 0; s < S; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    int arg = -1;
    for (int a : smdp.admissible[s]) {
      const std::size_t base = (static_cast<std::size_t>(s) * A + a) * S;
      double q = smdp.r(s, a);
      for (int s2 = 0; s2 < S; ++s2) q += d[base + s2] * out.v[s2];
      out.q[static_cast<std::size_t>(s) * A + a] = q;
      if (q > best + 1e-15) {
        best = q;
        arg = a;
      }
    }
    out.policy[s] = arg;
  }
  return out;
}

DecisionFormResult solve_decision_form(const LatentSmdp& latent, double tol,
                                       int max_iterations) {
  const DiscreteSmdp& smdp = latent.smdp;
  const int S = smdp.n_states;
  const int N = latent.n_agents;
  const int A = N + 1;
  if (smdp.n_actions != A) {
    throw std::invalid_argument("solve_decision_form: latent action count mismatch");
  }
  const auto d = collapse_durations(smdp);

  DecisionFormResult out;
  out.n_agents = N;
  out.n_states = S;
  out.n_actions = A;
  out.q.assign(static_cast<std::size_t>(N) * S * A, 0.0);
  out.v.assign(static_cast<std::size_t>(N) * S, 0.0);

  // Epoch-action sets: adm(m) with the running agent removed (no self handoff
  // at a decision epoch); STOP keeps its slot when admissible.
  std::vector<std::vector<int>> epoch_actions(static_cast<std::size_t>(N) * S);
  for (int i = 0; i < N; ++i) {
    for (int m = 0; m < S; ++m) {
      auto& acts = epoch_actions[static_cast<std::size_t>(i) * S + m];
      for (int a : smdp.admissible[m]) {
        if (a != i) acts.push_back(a);
      }
    }
  }

  std::vector<double> v_next(out.v.size(), 0.0);
  double residual = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter < max_iterations && residual > tol; ++iter) {
    residual = 0.0;
    for (int i = 0; i < N; ++i) {
      for (int m = 0; m < S; ++m) {
        const bool live = smdp.row_mass(m, i) > 0.5;
        const std::size_t row = (static_cast<std::size_t>(i) * S + m) * A;
        const std::size_t base = (static_cast<std::size_t>(m) * A + i) * S;
        double best = -std::numeric_limits<double>::infinity();
        const auto& acts = epoch_actions[static_cast<std::size_t>(i) * S + m];
        for (int c : acts) {
          double q = smdp.r(m, i);
          if (live) {
            if (c == latent.stop_action()) {
              // Successor value is zero after STOP.
            } else {
              double cont = 0.0;
              for (int m2 = 0; m2 < S; ++m2) {
                cont += d[base + m2] * out.v[static_cast<std::size_t>(c) * S + m2];
              }
              q += cont;
            }
          }
          out.q[row + c] = q;
          best = std::max(best, q);
        }
        const double value = acts.empty() ? 0.0 : best;
        v_next[static_cast<std::size_t>(i) * S + m] = value;
        residual = std::max(
            residual, std::abs(value - out.v[static_cast<std::size_t>(i) * S + m]));
      }
    }
    out.v.swap(v_next);
  }
  out.iterations = iter;
  out.residual = residual;
  return out;
}

AisSmdp aggregate_to_ais(const LatentSmdp& latent,
                         const std::vector<ObservationMap>& maps,
                         const std::vector<double>& weight_state_agent) {
  const DiscreteSmdp& lat = latent.smdp;
  const int S = lat.n_states;
  const int N = latent.n_agents;
  if (static_cast<int>(maps.size()) != N) {
    throw std::invalid_argument("aggregate_to_ais: one observation map per agent required");
  }
  if (!weight_state_agent.empty() &&
      weight_state_agent.size() != static_cast<std::size_t>(S) * N) {
    throw std::invalid_argument("aggregate_to_ais: weight table has wrong size");
  }

  AisSmdp ais;
  ais.n_agents = N;
  ais.state_offset.resize(N);
  ais.card_obs.resize(N);
  int total = 0;
  for (int i = 0; i < N; ++i) {
    ais.state_offset[i] = total;
    ais.card_obs[i] = maps[i].card_obs();
    total += maps[i].card_obs();
  }

  // Class weights w(m | i, o).
  ais.weights.assign(total, std::vector<double>(S, 0.0));
  for (int i = 0; i < N; ++i) {
    for (int m = 0; m < S; ++m) {
      const int o = maps[i](m, 0);
      const double w = weight_state_agent.empty()
                           ? 1.0
                           : weight_state_agent[static_cast<std::size_t>(m) * N + i];
      ais.weights[ais.state_of(i, o)][m] += w;
    }
  }
  for (int s = 0; s < total; ++s) {
    double mass = 0.0;
    for (double w : ais.weights[s]) mass += w;
    if (mass <= 0.0) {
      ais.excluded.push_back(s);
      continue;
    }
    for (double& w : ais.weights[s]) w /= mass;
  }

  ais.smdp.n_states = total;
  ais.smdp.n_actions = lat.n_actions;
  ais.smdp.tau_max = lat.tau_max;
  ais.smdp.gamma = lat.gamma;
  ais.smdp.allocate();

  for (int i = 0; i < N; ++i) {
    for (int o = 0; o < ais.card_obs[i]; ++o) {
      const int s = ais.state_of(i, o);
      const auto& w = ais.weights[s];
      bool empty = true;
      for (double x : w) {
        if (x > 0.0) {
          empty = false;
          break;
        }
      }
      if (empty) continue;

      // Admissible actions: intersection over the class preimage so the
      // aggregate never offers an action some member state forbids.
      std::vector<int> acts;
      bool first = true;
      for (int m = 0; m < S; ++m) {
        if (w[m] <= 0.0) continue;
        if (first) {
          acts = lat.admissible[m];
          first = false;
        } else {
          std::vector<int> keep;
          for (int a : acts) {
            if (std::find(lat.admissible[m].begin(), lat.admissible[m].end(), a) !=
                lat.admissible[m].end()) {
              keep.push_back(a);
            }
          }
          acts.swap(keep);
        }
      }
      ais.smdp.admissible[s] = acts;

      for (int a : acts) {
        double rbar = 0.0;
        for (int m = 0; m < S; ++m) {
          if (w[m] > 0.0) rbar += w[m] * lat.r(m, a);
        }
        ais.smdp.r(s, a) = a == latent.stop_action() ? 0.0 : rbar;
        if (a == latent.stop_action()) continue;
        // Push the averaged kernel through the successor's map: the next AIS
        // state is (a, phi_a(m')).
        for (int m = 0; m < S; ++m) {
          if (w[m] <= 0.0) continue;
          for (int m2 = 0; m2 < S; ++m2) {
            const int o2 = maps[a](m2, 0);
            const int s2 = ais.state_of(a, o2);
            for (int tau = 1; tau <= lat.tau_max; ++tau) {
              const double p = lat.k(m, a, m2, tau);
              if (p > 0.0) ais.smdp.k(s, a, s2, tau) += w[m] * p;
            }
          }
        }
      }
    }
  }
  return ais;
}

double lipschitz_constant(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return (*hi - *lo) / 2.0;
}

ValueGapCheck ais_value_gap_check(const LatentSmdp& latent, const AisSmdp& ais,
                                  const std::vector<ObservationMap>& maps,
                                  std::optional<double> l_v_override, double tol) {
  const DiscreteSmdp& lat = latent.smdp;
  const int S = lat.n_states;
  const int N = latent.n_agents;
  const auto lat_vi = smdp_value_iteration(lat, tol * 1e-3);
  const auto ais_vi = smdp_value_iteration(ais.smdp, tol * 1e-3);

  ValueGapCheck out;
  out.gamma_bar = lat.gamma_bar();

  std::vector<bool> is_excluded(ais.smdp.n_states, false);
  for (int s : ais.excluded) is_excluded[s] = true;

  for (int i = 0; i < N; ++i) {
    for (int m = 0; m < S; ++m) {
      const int o = maps[i](m, 0);
      const int s = ais.state_of(i, o);
      if (is_excluded[s]) continue;
      out.lhs = std::max(out.lhs, std::abs(lat_vi.v[m] - ais_vi.v[s]));

      if (lat.row_mass(m, i) <= 0.5) continue;  // terminal or unmodeled row
      const auto& w = ais.weights[s];

      double rhat = 0.0;
      for (int mm = 0; mm < S; ++mm) {
        if (w[mm] > 0.0) rhat += w[mm] * lat.r(mm, i);
      }
      out.eps_phi = std::max(out.eps_phi, std::abs(lat.r(m, i) - rhat));

      // Total variation between agent i's true next-(m', tau) distribution at m
      // and the class-averaged one.
      double tv = 0.0;
      for (int m2 = 0; m2 < S; ++m2) {
        for (int tau = 1; tau <= lat.tau_max; ++tau) {
          double avg = 0.0;
          for (int mm = 0; mm < S; ++mm) {
            if (w[mm] > 0.0) avg += w[mm] * lat.k(mm, i, m2, tau);
          }
          tv += std::abs(lat.k(m, i, m2, tau) - avg);
        }
      }
      out.delta_phi = std::max(out.delta_phi, 0.5 * tv);
    }
  }

  std::vector<double> included_values;
  for (int s = 0; s < ais.smdp.n_states; ++s) {
    if (!is_excluded[s]) included_values.push_back(ais_vi.v[s]);
  }
  out.l_v = l_v_override.value_or(lipschitz_constant(included_values));
  if (out.gamma_bar >= 1.0) {
    throw std::domain_error("ais_value_gap_check: effective discount is not below one");
  }
  out.rhs = (out.eps_phi + out.gamma_bar * out.l_v * out.delta_phi) /
            (1.0 - out.gamma_bar);
  out.holds = out.lhs <= out.rhs + tol;
  return out;
}

}  // namespace icsmdp
