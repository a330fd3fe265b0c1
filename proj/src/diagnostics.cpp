#include "icsmdp/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace icsmdp {
namespace {

using ChainKey = std::pair<int, int>;  // (obs, agent)

// Steps the decision-epoch chain: runs one invocation from an epoch-start
// state and returns the next epoch-start.  Termination (STOP or horizon)
// crosses the episode boundary, so the next chain state is a reset draw.
class EpochChain {
 public:
  EpochChain(Environment& env, const std::vector<ObservationMap>& maps,
             const SuccessorPolicy& successor_policy, const LocalPolicy& local_policy)
      : env_(env), maps_(maps), successor_policy_(successor_policy),
        local_policy_(local_policy) {}

  ChainKey key(const JointState& s) const {
    return {maps_[s.active](s.interface, s.privates[s.active]), s.active};
  }

  JointState advance(JointState state, Rng& rng) const {
    for (;;) {
      const auto candidates = env_.decision_candidates(state, rng);
      AgentId successor = state.active;
      if (!candidates.empty()) {
        if (successor_policy_) {
          const int obs =
              maps_[state.active](state.interface, state.privates[state.active]);
          successor = successor_policy_(state.active, obs, candidates, rng);
        } else {
          successor = candidates[rng.uniform_int(static_cast<int>(candidates.size()))];
        }
      }
      const int local =
          local_policy_
              ? local_policy_(state.active,
                              maps_[state.active](state.interface,
                                                  state.privates[state.active]),
                              env_.n_local_actions(state.active), rng)
              : env_.sample_internal_action(state, rng);
      const StepOutcome out = env_.step(state, JointAction{local, successor}, rng);
      if (out.terminated) return env_.reset(rng);
      if (out.handoff) return out.next;
      state = out.next;
    }
  }

 private:
  Environment& env_;
  const std::vector<ObservationMap>& maps_;
  const SuccessorPolicy& successor_policy_;
  const LocalPolicy& local_policy_;
};

double tv_to_mu(const std::map<ChainKey, long long>& counts, long long n,
                const std::map<ChainKey, double>& mu) {
  double tv = 0.0;
  for (const auto& [key, mass] : mu) {
    const auto it = counts.find(key);
    const double p = it == counts.end()
                         ? 0.0
                         : static_cast<double>(it->second) / static_cast<double>(n);
    tv += std::abs(p - mass);
  }
  for (const auto& [key, count] : counts) {
    if (mu.find(key) == mu.end())
      tv += static_cast<double>(count) / static_cast<double>(n);
  }
  return 0.5 * tv;
}

}  // namespace

ChainStats estimate_chain_stats(Environment& env,
                                const std::vector<ObservationMap>& maps,
                                long long n_epochs, double eps, Rng& rng,
                                const MixingParams& params,
                                const SuccessorPolicy& successor_policy,
                                const LocalPolicy& local_policy) {
  if (static_cast<int>(maps.size()) != env.config().n_agents)
    throw std::invalid_argument("estimate_chain_stats: one observation map per agent");
  if (n_epochs < 1) throw std::invalid_argument("estimate_chain_stats: n_epochs >= 1");
  if (!(eps > 0.0 && eps < 1.0))
    throw std::invalid_argument("estimate_chain_stats: eps must lie in (0, 1)");
  if (params.budget < 1 || params.n_starts < 1 || params.n_rollouts < 1)
    throw std::invalid_argument("estimate_chain_stats: mixing parameters must be >= 1");

  const EpochChain chain(env, maps, successor_policy, local_policy);

  // Long-run frequencies over epoch-start states, remembering one full joint
  // state per distinct chain state so the mixing phase can replay from it.
  std::map<ChainKey, long long> counts;
  std::map<ChainKey, JointState> representative;
  JointState state = env.reset(rng);
  for (long long i = 0; i < n_epochs; ++i) {
    const ChainKey k = chain.key(state);
    counts[k] += 1;
    representative.emplace(k, state);
    if (i + 1 < n_epochs) state = chain.advance(state, rng);
  }

  ChainStats stats;
  stats.eps = eps;
  stats.n_epochs = n_epochs;
  stats.mu_min = 1.0;
  for (const auto& [key, count] : counts) {
    const double p = static_cast<double>(count) / static_cast<double>(n_epochs);
    stats.mu[key] = p;
    stats.mu_min = std::min(stats.mu_min, p);
  }

  // Mixing time: replay from a spread of recorded starts and find the first
  // epoch count k at which every start's empirical distribution is within eps
  // of mu in total variation.
  std::vector<JointState> starts;
  {
    std::vector<const JointState*> all;
    for (const auto& [key, s] : representative) all.push_back(&s);
    const int n = static_cast<int>(all.size());
    const int take = std::min(params.n_starts, n);
    for (int i = 0; i < take; ++i) starts.push_back(*all[i * n / take]);
  }

  // tv[k-1] accumulates the worst total variation over starts at step k.
  std::vector<double> worst_tv(params.budget, 0.0);
  for (const JointState& start : starts) {
    std::vector<std::map<ChainKey, long long>> k_counts(params.budget);
    for (int roll = 0; roll < params.n_rollouts; ++roll) {
      JointState s = start;
      for (int k = 0; k < params.budget; ++k) {
        s = chain.advance(s, rng);
        k_counts[k][chain.key(s)] += 1;
      }
    }
    for (int k = 0; k < params.budget; ++k) {
      worst_tv[k] =
          std::max(worst_tv[k], tv_to_mu(k_counts[k], params.n_rollouts, stats.mu));
    }
  }

  stats.t_mix = params.budget;
  stats.flagged = true;
  for (int k = 0; k < params.budget; ++k) {
    if (worst_tv[k] <= eps) {
      stats.t_mix = k + 1;
      stats.flagged = false;
      break;
    }
  }
  return stats;
}

nlohmann::json to_json(const ChainStats& stats) {
  nlohmann::json mu = nlohmann::json::array();
  for (const auto& [key, p] : stats.mu)
    mu.push_back({{"obs", key.first}, {"agent", key.second}, {"p", p}});
  return {{"mu", mu},
          {"mu_min", stats.mu_min},
          {"t_mix", stats.t_mix},
          {"eps", stats.eps},
          {"flagged", stats.flagged},
          {"method", stats.method},
          {"n_epochs", stats.n_epochs}};
}

CovarianceReport feature_covariance(
    const std::vector<std::pair<double, Eigen::VectorXd>>& weighted_features) {
  if (weighted_features.empty())
    throw std::invalid_argument("feature_covariance: empty feature set");
  const Eigen::Index dim = weighted_features.front().second.size();
  if (dim < 1) throw std::invalid_argument("feature_covariance: empty vectors");

  CovarianceReport rep;
  rep.sigma = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& [w, g] : weighted_features) {
    if (g.size() != dim)
      throw std::invalid_argument("feature_covariance: inconsistent dimensions");
    rep.sigma.noalias() += w * g * g.transpose();
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(rep.sigma);
  const Eigen::VectorXd& ev = solver.eigenvalues();  // ascending
  rep.lambda_max = ev(dim - 1);
  rep.threshold = 1e-12 * std::max(rep.lambda_max, 0.0);
  rep.lambda0 = 0.0;
  rep.rank = 0;
  for (Eigen::Index i = 0; i < dim; ++i) {
    if (ev(i) > rep.threshold && ev(i) > 0.0) {
      if (rep.rank == 0) rep.lambda0 = ev(i);
      rep.rank += 1;
    }
  }
  return rep;
}

namespace {

std::vector<double> gamma_powers(const DiscreteSmdp& smdp) {
  std::vector<double> pow(smdp.tau_max + 1, 1.0);
  for (int t = 1; t <= smdp.tau_max; ++t) pow[t] = pow[t - 1] * smdp.gamma;
  return pow;
}

int greedy_action(const DiscreteSmdp& smdp, const std::vector<double>& v, int s,
                  const std::vector<double>& gpow) {
  int best = -1;
  double best_val = 0.0;
  for (int a : smdp.admissible[s]) {
    double q = smdp.r(s, a);
    for (int s2 = 0; s2 < smdp.n_states; ++s2)
      for (int tau = 1; tau <= smdp.tau_max; ++tau)
        q += smdp.k(s, a, s2, tau) * gpow[tau] * v[s2];
    if (best < 0 || q > best_val) {
      best = a;
      best_val = q;
    }
  }
  return best;
}

bool margin_psd(const Eigen::MatrixXd& sigma_mu, const Eigen::MatrixXd& sigma_next,
                double nu, double tol) {
  const Eigen::MatrixXd gap = (1.0 - nu) * (1.0 - nu) * sigma_mu - sigma_next;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gap);
  return solver.eigenvalues()(0) >= -tol;
}

}  // namespace

ContractionReport contraction_margin(const DiscreteSmdp& smdp,
                                     const std::vector<Eigen::VectorXd>& state_features,
                                     const std::vector<double>& mu, int n_probes,
                                     std::uint64_t probe_seed) {
  const int S = smdp.n_states;
  if (static_cast<int>(state_features.size()) != S ||
      static_cast<int>(mu.size()) != S)
    throw std::invalid_argument("contraction_margin: per-state features and weights required");
  if (n_probes < 1) throw std::invalid_argument("contraction_margin: n_probes >= 1");

  // Probe set: the zero vector (myopic greedy), the optimal values, and
  // seeded random vectors on the attainable value scale.
  std::vector<std::vector<double>> probes;
  probes.emplace_back(S, 0.0);
  if (static_cast<int>(probes.size()) < n_probes)
    probes.push_back(smdp_value_iteration(smdp).v);
  double r_scale = 0.0;
  for (double r : smdp.reward) r_scale = std::max(r_scale, std::abs(r));
  const double v_scale = r_scale / (1.0 - smdp.gamma) + 1.0;
  Rng rng = Rng::substream(probe_seed, "contraction-probe");
  while (static_cast<int>(probes.size()) < n_probes) {
    std::vector<double> v(S);
    for (double& x : v) x = rng.uniform(-v_scale, v_scale);
    probes.push_back(std::move(v));
  }
  return contraction_margin_with_probes(smdp, state_features, mu, probes);
}

ContractionReport contraction_margin_with_probes(
    const DiscreteSmdp& smdp, const std::vector<Eigen::VectorXd>& state_features,
    const std::vector<double>& mu, const std::vector<std::vector<double>>& probes) {
  const int S = smdp.n_states;
  if (static_cast<int>(state_features.size()) != S ||
      static_cast<int>(mu.size()) != S)
    throw std::invalid_argument("contraction_margin: per-state features and weights required");
  if (probes.empty())
    throw std::invalid_argument("contraction_margin: at least one probe required");
  const Eigen::Index dim = state_features.front().size();
  const auto gpow = gamma_powers(smdp);

  Eigen::MatrixXd sigma_mu = Eigen::MatrixXd::Zero(dim, dim);
  for (int s = 0; s < S; ++s)
    sigma_mu.noalias() += mu[s] * state_features[s] * state_features[s].transpose();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> top(sigma_mu);
  const double psd_tol = 1e-10 * std::max(1.0, top.eigenvalues()(dim - 1));

  ContractionReport rep;
  rep.n_probes = static_cast<int>(probes.size());
  rep.holds = true;
  rep.nu_hat = 1.0;
  for (const auto& v : probes) {
    if (static_cast<int>(v.size()) != S)
      throw std::invalid_argument("contraction_margin: probe length mismatch");

    // Discount-weighted next-feature second moment under the probe's greedy
    // policy; terminal rows have no successor and contribute nothing.
    Eigen::MatrixXd sigma_next = Eigen::MatrixXd::Zero(dim, dim);
    for (int s = 0; s < S; ++s) {
      if (mu[s] == 0.0 || smdp.admissible[s].empty()) continue;
      const int a = greedy_action(smdp, v, s, gpow);
      for (int s2 = 0; s2 < S; ++s2) {
        double w = 0.0;
        for (int tau = 1; tau <= smdp.tau_max; ++tau)
          w += smdp.k(s, a, s2, tau) * gpow[tau] * gpow[tau];
        if (w > 0.0)
          sigma_next.noalias() +=
              mu[s] * w * state_features[s2] * state_features[s2].transpose();
      }
    }

    if (!margin_psd(sigma_mu, sigma_next, 0.0, psd_tol)) {
      rep.holds = false;
      rep.nu_hat = 0.0;
      continue;
    }
    double lo = 0.0, hi = 1.0;
    while (hi - lo > 1e-9) {
      const double mid = 0.5 * (lo + hi);
      (margin_psd(sigma_mu, sigma_next, mid, psd_tol) ? lo : hi) = mid;
    }
    rep.nu_hat = std::min(rep.nu_hat, lo);
  }
  if (!rep.holds) rep.nu_hat = 0.0;
  return rep;
}

double value_gap(IcqTrainer& trainer, double reference_value, int n_eval,
                 std::uint64_t eval_seed) {
  return reference_value - trainer.evaluate(eval_seed, n_eval).mean_discounted;
}

namespace {

void check_pair_lengths(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size())
    throw std::domain_error("correlation: length mismatch");
  if (xs.size() < 2) throw std::domain_error("correlation: need at least two points");
}

std::vector<double> tie_averaged_ranks(const std::vector<double>& xs) {
  const int n = static_cast<int>(xs.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = 0.5 * (i + j) + 1.0;  // average rank, 1-based
    for (int k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  check_pair_lengths(xs, ys);
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0)
    throw std::domain_error("pearson: zero variance input");
  return sxy / std::sqrt(sxx * syy);
}

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  check_pair_lengths(xs, ys);
  return pearson(tie_averaged_ranks(xs), tie_averaged_ranks(ys));
}

TheoryReport evaluate_bound_terms(const BoundInputs& in) {
  TheoryReport rep;
  rep.representation_term.expr = "2 * alpha_q^2";
  if (in.alpha_q)
    rep.representation_term.value = 2.0 * *in.alpha_q * *in.alpha_q;

  rep.approximation_term.expr = "6 eps_app + 6 eps_0 + 6 lambda_max c1 eps_0";
  if (in.eps_app && in.eps_0 && in.lambda_max && in.c1)
    rep.approximation_term.value =
        6.0 * *in.eps_app + 6.0 * *in.eps_0 + 6.0 * *in.lambda_max * *in.c1 * *in.eps_0;

  rep.mixing_term.expr = "6 lambda_max c0 (1 + t_mix) (1 + log(T + 1)) / T";
  if (in.lambda_max && in.c0 && in.t_mix && in.horizon_t) {
    if (!(*in.horizon_t > 0.0))
      throw std::domain_error("evaluate_bound_terms: T must be positive");
    rep.mixing_term.value = 6.0 * *in.lambda_max * *in.c0 * (1.0 + *in.t_mix) *
                            (1.0 + std::log(*in.horizon_t + 1.0)) / *in.horizon_t;
  }
  return rep;
}

std::optional<double> TheoryReport::total() const {
  if (representation_term.symbolic() || approximation_term.symbolic() ||
      mixing_term.symbolic())
    return std::nullopt;
  return *representation_term.value + *approximation_term.value + *mixing_term.value;
}

namespace {

nlohmann::json term_json(const BoundTerm& t) {
  return {{"value", t.value ? nlohmann::json(*t.value) : nlohmann::json(nullptr)},
          {"expr", t.expr},
          {"symbolic", t.symbolic()}};
}

}  // namespace

nlohmann::json to_json(const TheoryReport& report) {
  const auto sum = report.total();
  return {{"lambda0", report.lambda0},
          {"lambda_max", report.lambda_max},
          {"nu_hat", report.nu_hat ? nlohmann::json(*report.nu_hat) : nlohmann::json(nullptr)},
          {"contraction_holds", report.contraction_holds},
          {"gamma_bar_hat", report.gamma_bar_hat},
          {"r_max", report.r_max},
          {"representation_term", term_json(report.representation_term)},
          {"approximation_term", term_json(report.approximation_term)},
          {"mixing_term", term_json(report.mixing_term)},
          {"total", sum ? nlohmann::json(*sum) : nlohmann::json(nullptr)}};
}

}  // namespace icsmdp
