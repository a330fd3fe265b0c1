#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "icsmdp/ais_gap.hpp"
#include "icsmdp/diagnostics.hpp"
#include "icsmdp/envs/cpu.hpp"
#include "icsmdp/envs/graphs.hpp"
#include "icsmdp/envs/routing.hpp"
#include "icsmdp/envs/synthetic.hpp"
#include "icsmdp/expkit.hpp"
#include "icsmdp/learner.hpp"
#include "icsmdp/rng.hpp"
#include "icsmdp/smdp.hpp"
#include "icsmdp/smdp_extract.hpp"

#include "expkit_internal.hpp"

namespace icsmdp {
namespace {

using detail::KvMap;
using detail::map_flag;
using detail::map_int;
using detail::map_num;
using detail::map_str;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void check_keys(const KvMap& m, const std::set<std::string>& allowed,
                const std::string& section) {
  for (const auto& [k, v] : m) {
    (void)v;
    if (!allowed.count(k))
      throw std::invalid_argument(section + ": unknown key '" + k + "'");
  }
}

const std::set<std::string> kSynthKeys = {
    "small_instance", "n_agents",   "n_core",       "n_stations",
    "card_interface", "horizon",    "discount",     "rho",
    "p_handoff",      "handoff_cost", "q_quick",    "q_slow",
    "out_degree",     "n_local_actions", "interface_memory", "reward_blocks",
    "iface_window"};

// Synthetic spec for one experiment seed.  Full-scale mode derives fresh
// kernel/reward seeds per experiment seed; small-instance mode delegates to
// the seeded family and accepts only timing overrides.
SyntheticSpec synth_spec_for(const KvMap& env, std::uint64_t seed) {
  check_keys(env, kSynthKeys, "env");
  if (map_flag(env, "small_instance", false)) {
    SyntheticSpec s = small_instance_spec(seed, static_cast<int>(map_int(env, "n_agents", 3)),
                                          static_cast<int>(map_int(env, "card_interface", 8)));
    s.horizon = static_cast<int>(map_int(env, "horizon", s.horizon));
    s.discount = map_num(env, "discount", s.discount);
    s.p_handoff = map_num(env, "p_handoff", s.p_handoff);
    s.handoff_cost = map_num(env, "handoff_cost", s.handoff_cost);
    return s;
  }
  SyntheticSpec s;
  s.n_agents = static_cast<int>(map_int(env, "n_agents", s.n_agents));
  s.n_core = static_cast<int>(map_int(env, "n_core", s.n_core));
  s.n_stations = static_cast<int>(map_int(env, "n_stations", s.n_stations));
  s.card_interface = static_cast<int>(map_int(env, "card_interface", s.card_interface));
  s.horizon = static_cast<int>(map_int(env, "horizon", s.horizon));
  s.discount = map_num(env, "discount", s.discount);
  s.rho = map_num(env, "rho", s.rho);
  s.p_handoff = map_num(env, "p_handoff", s.p_handoff);
  s.handoff_cost = map_num(env, "handoff_cost", s.handoff_cost);
  s.q_quick = map_num(env, "q_quick", s.q_quick);
  s.q_slow = map_num(env, "q_slow", s.q_slow);
  s.out_degree = static_cast<int>(map_int(env, "out_degree", s.out_degree));
  s.n_local_actions = static_cast<int>(map_int(env, "n_local_actions", s.n_local_actions));
  s.interface_memory = map_flag(env, "interface_memory", s.interface_memory);
  s.reward_blocks = static_cast<int>(map_int(env, "reward_blocks", s.reward_blocks));
  s.iface_window = static_cast<int>(map_int(env, "iface_window", s.iface_window));
  s.kernel_seed = derive_seed(seed, "env-kernel");
  s.reward_seed = derive_seed(seed, "env-reward");
  return s;
}

RunRecord blank_record(const ExperimentConfig& cfg, const std::string& hash, int ai,
                       int si, double axis_value) {
  RunRecord r;
  r.experiment = cfg.experiment;
  r.axis_name = cfg.axis.name;
  r.axis_label = cfg.axis.values[ai];
  r.axis_value = axis_value;
  r.seed = cfg.seeds[si];
  r.hash = hash;
  r.error = std::nan("");
  r.gap_v = std::nan("");
  r.alpha_hat = std::nan("");
  r.t_mix = std::nan("");
  r.accuracy = std::nan("");
  r.aux_metric = std::nan("");
  return r;
}

ExperimentResult finish(std::vector<RunRecord> rows) {
  ExperimentResult res;
  res.rows = std::move(rows);
  res.summary = detail::build_summary(res.rows);
  for (const auto& r : res.rows) res.flagged = res.flagged || r.flagged;
  return res;
}

// All values held by an agent's successor-choice head, for Lipschitz scales.
std::vector<double> head_values(IcqTrainer& trainer) {
  std::vector<double> values;
  for (int i = 0; i < trainer.n_agents(); ++i) {
    const QEstimator& q = trainer.q_beta(i);
    for (int o = 0; o < q.card_obs(); ++o)
      for (int a = 0; a < q.n_actions(); ++a) values.push_back(q.evaluate(o, a));
  }
  return values;
}

// ---------------------------------------------------------------------------
// Retention sweeps: train at each retention level with common random numbers,
// estimate the abstraction gaps on the same maps, and report the evaluation
// shortfall against the seed's highest-retention baseline.  Used by both the
// t1 correlation experiment and the t2 retention-floor experiment.
ExperimentResult run_gap_sweep(const ExperimentConfig& cfg) {
  if (cfg.axis.name != "rho")
    throw std::invalid_argument(cfg.experiment + ": expected axis 'rho'");
  const auto rhos = detail::axis_numeric(cfg.axis);
  for (double rho : rhos)
    if (!(rho > 0.0) || rho > 1.0)
      throw std::invalid_argument(cfg.experiment + ": rho must lie in (0, 1]");
  const int base_idx = static_cast<int>(
      std::max_element(rhos.begin(), rhos.end()) - rhos.begin());
  const long long gap_epochs = map_int(cfg.protocol, "gap_epochs", 4000);
  const std::string hash = config_hash(cfg);
  const int n_axis = static_cast<int>(rhos.size());
  const int n_seeds = static_cast<int>(cfg.seeds.size());

  struct Aux {
    double raw = std::nan("");
    double eps = 0.0, delta = 0.0, gbar = 0.0, lq = 0.0;
  };
  std::vector<RunRecord> rows(n_axis * n_seeds);
  std::vector<Aux> aux(n_axis * n_seeds);

  detail::for_each_cell(n_axis * n_seeds, [&](int idx) {
    const int ai = idx / n_seeds, si = idx % n_seeds;
    const std::uint64_t seed = cfg.seeds[si];
    const double t0 = now_seconds();
    RunRecord rec = blank_record(cfg, hash, ai, si, rhos[ai]);

    SyntheticSpec spec = synth_spec_for(cfg.env, seed);
    spec.rho = rhos[ai];
    auto env = build_synthetic(spec);
    auto maps = env->default_observation_maps();
    LearnerConfig lc = detail::learner_from_map(cfg.learner);
    lc.seed = derive_seed(seed, "learner-init", ai);
    IcqTrainer trainer(*env, maps, lc);
    Rng train_rng = Rng::substream(seed, "train", ai);
    trainer.train(train_rng);
    // The eval stream depends only on the seed, so returns across retention
    // levels are common-random-number comparable.
    const auto eval = trainer.evaluate(derive_seed(seed, "eval"), cfg.eval_episodes);

    Rng gap_rng = Rng::substream(seed, "gap", ai);
    const AisGapEstimate gap = estimate_ais_gap(*env, maps, gap_epochs, 1.0, gap_rng);

    Aux& a = aux[idx];
    a.raw = eval.mean_discounted;
    a.eps = gap.eps_hat;
    a.delta = gap.delta_hat;
    a.gbar = gap.gamma_bar_hat;
    if (ai == base_idx) a.lq = lipschitz_constant(head_values(trainer));

    rec.epochs_used = trainer.global_epoch();
    rec.flagged = !std::isfinite(a.raw) || !std::isfinite(a.eps) ||
                  !std::isfinite(a.delta) || !(a.gbar >= 0.0 && a.gbar < 1.0);
    rec.wall_seconds = now_seconds() - t0;
    rows[idx] = std::move(rec);
  });

  // Gaps and quality scalars need the per-seed baseline cell.
  for (int si = 0; si < n_seeds; ++si) {
    const Aux& base = aux[base_idx * n_seeds + si];
    const bool base_ok = !rows[base_idx * n_seeds + si].flagged;
    for (int ai = 0; ai < n_axis; ++ai) {
      const int idx = ai * n_seeds + si;
      if (!base_ok) rows[idx].flagged = true;
      if (rows[idx].flagged) continue;
      rows[idx].gap_v = base.raw - aux[idx].raw;
      rows[idx].error = rows[idx].gap_v;
      rows[idx].alpha_hat =
          alpha_from_gaps(aux[idx].eps, aux[idx].delta, aux[idx].gbar, base.lq);
    }
  }
  return finish(std::move(rows));
}

// ---------------------------------------------------------------------------
// Sample-budget sweep on small instances with a uniform behavior policy; the
// metric is the visitation-weighted mean squared error between the learned
// tables and the decision-form solution of the exactly extracted SMDP.
ExperimentResult run_budget_sweep(const ExperimentConfig& cfg) {
  if (cfg.axis.name != "budget")
    throw std::invalid_argument(cfg.experiment + ": expected axis 'budget'");
  const auto budgets = detail::axis_numeric(cfg.axis);
  for (double b : budgets)
    if (!(b >= 1.0)) throw std::invalid_argument("budget grid entries must be >= 1");
  const std::string hash = config_hash(cfg);
  const int n_axis = static_cast<int>(budgets.size());
  const int n_seeds = static_cast<int>(cfg.seeds.size());

  std::vector<RunRecord> rows(n_axis * n_seeds);
  detail::for_each_cell(n_axis * n_seeds, [&](int idx) {
    const int ai = idx / n_seeds, si = idx % n_seeds;
    const std::uint64_t seed = cfg.seeds[si];
    const double t0 = now_seconds();
    RunRecord rec = blank_record(cfg, hash, ai, si, budgets[ai]);

    SyntheticSpec spec = synth_spec_for(cfg.env, seed);
    auto env = build_synthetic(spec);
    auto maps = env->default_observation_maps();
    const auto exact = extract_latent_smdp_exact(*env->primitive_model(), spec.horizon);
    const auto oracle = solve_decision_form(exact.latent, 1e-12);
    const int n_states = exact.latent.smdp.n_states;
    const int n_agents = exact.latent.n_agents;

    LearnerConfig lc = detail::learner_from_map(cfg.learner);
    lc.budget_epochs = static_cast<long long>(budgets[ai]);
    lc.seed = derive_seed(seed, "learner-init", ai);
    IcqTrainer trainer(*env, maps, lc);
    Rng train_rng = Rng::substream(seed, "train", ai);
    trainer.train(train_rng);

    double mse = 0.0;
    for (int m = 0; m < n_states; ++m) {
      for (int i = 0; i < n_agents; ++i) {
        const double w = exact.pi_state_agent[m * n_agents + i];
        if (w <= 0.0) continue;
        std::vector<int> actions;
        for (int a : exact.latent.smdp.admissible[m])
          if (a != i) actions.push_back(a);
        if (actions.empty()) continue;
        const int obs = maps[i](m, 0);
        for (int a : actions) {
          const double diff =
              trainer.q_beta(i).evaluate(obs, a) - oracle.qval(i, m, a);
          mse += w / actions.size() * diff * diff;
        }
      }
    }
    rec.error = mse;
    rec.epochs_used = trainer.global_epoch();
    rec.flagged = !std::isfinite(mse);
    rec.wall_seconds = now_seconds() - t0;
    rows[idx] = std::move(rec);
  });
  return finish(std::move(rows));
}

// ---------------------------------------------------------------------------
// Handoff-rate sweep: the epoch-chain mixing time and the shortfall of each
// cell's greedy return against the seed's best cell.
ExperimentResult run_mixing_sweep(const ExperimentConfig& cfg) {
  if (cfg.axis.name != "p_handoff")
    throw std::invalid_argument(cfg.experiment + ": expected axis 'p_handoff'");
  const auto ps = detail::axis_numeric(cfg.axis);
  for (double p : ps)
    if (!(p > 0.0) || p >= 1.0)
      throw std::invalid_argument("p_handoff grid entries must lie in (0, 1)");
  const std::string hash = config_hash(cfg);
  const long long mix_epochs = map_int(cfg.protocol, "mix_epochs", 6000);
  const double mix_eps = map_num(cfg.protocol, "mix_eps", 0.25);
  const long long ref_budget = map_int(cfg.protocol, "ref_budget", 0);
  MixingParams mix_params;
  mix_params.budget = static_cast<int>(map_int(cfg.protocol, "mix_budget", 48));
  mix_params.n_starts = static_cast<int>(map_int(cfg.protocol, "mix_starts", 5));
  mix_params.n_rollouts = static_cast<int>(map_int(cfg.protocol, "mix_rollouts", 512));
  const int n_axis = static_cast<int>(ps.size());
  const int n_seeds = static_cast<int>(cfg.seeds.size());

  // The mixing diagnostic probes the persistent decision-epoch chain, so the
  // behavior policy never elects STOP: a uniform policy would terminate the
  // episode every ~n_agents epochs and the measured relaxation would collapse
  // to the reset rate at every axis point instead of the chain's own memory.
  const SuccessorPolicy persistent_uniform =
      [](AgentId, int, const std::vector<AgentId>& candidates, Rng& rng) {
        std::vector<AgentId> live;
        live.reserve(candidates.size());
        for (AgentId c : candidates)
          if (!is_stop(c)) live.push_back(c);
        const auto& pool = live.empty() ? candidates : live;
        return pool[rng.uniform_int(static_cast<int>(pool.size()))];
      };

  std::vector<RunRecord> rows(n_axis * n_seeds);
  detail::for_each_cell(n_axis * n_seeds, [&](int idx) {
    const int ai = idx / n_seeds, si = idx % n_seeds;
    const std::uint64_t seed = cfg.seeds[si];
    const double t0 = now_seconds();
    RunRecord rec = blank_record(cfg, hash, ai, si, ps[ai]);

    SyntheticSpec spec = synth_spec_for(cfg.env, seed);
    spec.p_handoff = ps[ai];
    auto env = build_synthetic(spec);
    auto maps = env->default_observation_maps();
    LearnerConfig lc = detail::learner_from_map(cfg.learner);
    lc.seed = derive_seed(seed, "learner-init", ai);
    IcqTrainer trainer(*env, maps, lc);
    Rng train_rng = Rng::substream(seed, "train", ai);
    trainer.train(train_rng);

    Rng mix_rng = Rng::substream(seed, "mix", ai);
    const ChainStats stats = estimate_chain_stats(*env, maps, mix_epochs, mix_eps,
                                                  mix_rng, mix_params,
                                                  persistent_uniform);
    rec.t_mix = stats.t_mix;

    // Shortfall at the fixed budget against a long-budget reference trained on
    // the same instance from the same initialization: the frequency-weighted
    // mean-squared distance between the two successor-choice tables.  Table
    // distance is deterministic given the training streams, unlike greedy
    // rollout returns whose argmax flips add evaluation noise on the same
    // scale as the effect under study.
    if (ref_budget > 0) {
      LearnerConfig ref_lc = lc;
      ref_lc.budget_epochs = ref_budget;
      IcqTrainer reference(*env, maps, ref_lc);
      Rng ref_rng = Rng::substream(seed, "train-ref", ai);
      reference.train(ref_rng);
      double mse = 0.0;
      for (const auto& [key, weight] : stats.mu) {
        const auto& [obs, agent] = key;
        const QEstimator& qb = trainer.q_beta(agent);
        const QEstimator& qr = reference.q_beta(agent);
        double row = 0.0;
        for (int a = 0; a < qb.n_actions(); ++a) {
          const double d = qb.evaluate(obs, a) - qr.evaluate(obs, a);
          row += d * d;
        }
        mse += weight * row / qb.n_actions();
      }
      rec.error = mse;
    }

    rec.epochs_used = trainer.global_epoch();
    rec.flagged = stats.flagged || (ref_budget > 0 && !std::isfinite(rec.error));
    rec.wall_seconds = now_seconds() - t0;
    rows[idx] = std::move(rec);
  });

  return finish(std::move(rows));
}

}  // namespace

ExperimentResult run_t1(const ExperimentConfig& cfg) { return run_gap_sweep(cfg); }

ExperimentResult run_t2(const ExperimentConfig& cfg) {
  if (cfg.experiment == "t2-sample-budget") return run_budget_sweep(cfg);
  if (cfg.experiment == "t2-mixing") return run_mixing_sweep(cfg);
  if (cfg.experiment == "t2-retention") return run_gap_sweep(cfg);
  throw std::invalid_argument("run_t2: unexpected experiment id " + cfg.experiment);
}

// ---------------------------------------------------------------------------

ExperimentResult run_routing(const ExperimentConfig& cfg) {
  if (cfg.axis.name != "family")
    throw std::invalid_argument("routing: expected axis 'family'");
  check_keys(cfg.env,
             {"n_nodes", "horizon", "discount", "step_cost", "er_edge_prob",
              "ba_attachment", "ws_degree", "ws_rewire"},
             "env");
  const std::string hash = config_hash(cfg);
  const int n_axis = static_cast<int>(cfg.axis.values.size());
  const int n_seeds = static_cast<int>(cfg.seeds.size());
  for (const auto& v : cfg.axis.values) graph_family_from_string(v);  // fail fast

  std::vector<RunRecord> rows(n_axis * n_seeds);
  detail::for_each_cell(n_axis * n_seeds, [&](int idx) {
    const int ai = idx / n_seeds, si = idx % n_seeds;
    const std::uint64_t seed = cfg.seeds[si];
    const double t0 = now_seconds();
    RunRecord rec = blank_record(cfg, hash, ai, si, ai);

    RoutingSpec rs;
    rs.graph.family = graph_family_from_string(cfg.axis.values[ai]);
    rs.graph.n_nodes = static_cast<int>(map_int(cfg.env, "n_nodes", 100));
    rs.graph.seed = derive_seed(seed, "graph");
    rs.graph.er_edge_prob = map_num(cfg.env, "er_edge_prob", rs.graph.er_edge_prob);
    rs.graph.ba_attachment =
        static_cast<int>(map_int(cfg.env, "ba_attachment", rs.graph.ba_attachment));
    rs.graph.ws_degree = static_cast<int>(map_int(cfg.env, "ws_degree", rs.graph.ws_degree));
    rs.graph.ws_rewire = map_num(cfg.env, "ws_rewire", rs.graph.ws_rewire);
    rs.horizon = static_cast<int>(map_int(cfg.env, "horizon", rs.horizon));
    rs.discount = map_num(cfg.env, "discount", rs.discount);
    rs.step_cost = map_num(cfg.env, "step_cost", rs.step_cost);
    auto env = build_routing(rs);
    auto maps = env->default_observation_maps();
    const int n = env->graph().n_nodes;

    LearnerConfig lc = detail::learner_from_map(cfg.learner);
    lc.seed = derive_seed(seed, "learner-init", ai);
    IcqTrainer trainer(*env, maps, lc);
    Rng train_rng = Rng::substream(seed, "train", ai);
    trainer.train(train_rng);

    std::vector<std::vector<int>> dist(n);
    for (int s = 0; s < n; ++s) dist[s] = bfs_distances(env->graph(), s);

    long long delivered = 0, optimal = 0, pairs = 0;
    Rng dummy(0);  // the rollout below is deterministic
    for (int s = 0; s < n; ++s) {
      for (int d = 0; d < n; ++d) {
        if (s == d) continue;
        ++pairs;
        JointState state = env->reset_to(s, d);
        int moves = 0;
        bool ok = false;
        while (true) {
          const AgentId active = state.active;
          const int obs = maps[active](state.interface, state.privates[active]);
          const auto cands = env->decision_candidates(state, dummy);
          const AgentId succ =
              select_successor(trainer.q_beta(active), obs, cands, 0.0, n, dummy);
          const StepOutcome out = env->step(state, {0, succ}, dummy);
          if (out.handoff && !is_stop(succ)) ++moves;
          if (out.terminated) {
            ok = is_stop(succ) && out.reward > 0.5;
            break;
          }
          state = out.next;
        }
        if (ok) {
          ++delivered;
          if (moves == dist[s][d]) ++optimal;
        }
      }
    }
    rec.accuracy = static_cast<double>(delivered) / pairs;
    rec.aux_metric = static_cast<double>(optimal) / pairs;
    rec.error = 1.0 - rec.accuracy;
    rec.epochs_used = trainer.global_epoch();
    rec.wall_seconds = now_seconds() - t0;
    rows[idx] = std::move(rec);
  });
  return finish(std::move(rows));
}

// ---------------------------------------------------------------------------

ExperimentResult run_cpu(const ExperimentConfig& cfg) {
  if (cfg.axis.name != "train_fraction")
    throw std::invalid_argument("cpu: expected axis 'train_fraction'");
  check_keys(cfg.env, {"value_range", "horizon", "discount", "step_cost", "spec_seed"},
             "env");
  const auto fractions = detail::axis_numeric(cfg.axis);
  const std::string hash = config_hash(cfg);
  const std::uint64_t eval_stream =
      static_cast<std::uint64_t>(map_int(cfg.protocol, "eval_stream", 4242));
  const int trivial_samples =
      static_cast<int>(map_int(cfg.protocol, "trivial_samples", 200));
  const int n_axis = static_cast<int>(fractions.size());
  const int n_seeds = static_cast<int>(cfg.seeds.size());

  std::vector<RunRecord> rows(n_axis * n_seeds);
  detail::for_each_cell(n_axis * n_seeds, [&](int idx) {
    const int ai = idx / n_seeds, si = idx % n_seeds;
    const std::uint64_t seed = cfg.seeds[si];
    const double t0 = now_seconds();
    RunRecord rec = blank_record(cfg, hash, ai, si, fractions[ai]);

    CpuSpec cs;
    cs.value_range = static_cast<int>(map_int(cfg.env, "value_range", cs.value_range));
    cs.horizon = static_cast<int>(map_int(cfg.env, "horizon", cs.horizon));
    cs.discount = map_num(cfg.env, "discount", cs.discount);
    cs.step_cost = map_num(cfg.env, "step_cost", cs.step_cost);
    cs.seed = static_cast<std::uint64_t>(map_int(cfg.env, "spec_seed", 12));
    cs.train_fraction = fractions[ai];
    cs.operand_mode = CpuSpec::OperandMode::kTrain;
    auto env = build_cpu(cs);
    auto maps = env->default_observation_maps();

    LearnerConfig lc = detail::learner_from_map(cfg.learner);
    lc.seed = derive_seed(seed, "learner-init", ai);
    IcqTrainer trainer(*env, maps, lc);
    Rng train_rng = Rng::substream(seed, "train", ai);
    trainer.train(train_rng);

    // Held-out accuracy: replay the learned tables against operand pairs the
    // training mode could not produce (the full distribution at fraction 1).
    CpuSpec es = cs;
    es.operand_mode = fractions[ai] < 1.0 ? CpuSpec::OperandMode::kHoldout
                                          : CpuSpec::OperandMode::kFull;
    auto eval_env = build_cpu(es);
    IcqTrainer rated(*eval_env, eval_env->default_observation_maps(), lc);
    rated.restore(trainer.checkpoint());
    int hits = 0;
    for (int ep = 0; ep < cfg.eval_episodes; ++ep) {
      Rng ep_rng = Rng::substream(eval_stream, "eval", ep);
      const auto res = rated.run_episode(ep_rng, false, 0.0);
      if (res.undiscounted_return > 0.5) ++hits;
    }
    rec.accuracy = static_cast<double>(hits) / cfg.eval_episodes;
    rec.error = 1.0 - rec.accuracy;

    // Control metric: targets equal to an operand are satisfiable by a pure
    // copy program, so any interface-reading policy should ace them.
    std::vector<std::array<int, 3>> triples;
    const int range = cs.value_range;
    const int train_vals = cs.train_values();
    for (int a = 0; a < range; ++a) {
      for (int b = 0; b < range; ++b) {
        const bool holdout_pair = a >= train_vals || b >= train_vals;
        if (es.operand_mode == CpuSpec::OperandMode::kHoldout && !holdout_pair) continue;
        triples.push_back({a, b, a});
        if (b != a) triples.push_back({a, b, b});
      }
    }
    Rng pick = Rng::substream(eval_stream, "trivial");
    for (int i = static_cast<int>(triples.size()) - 1; i > 0; --i)
      std::swap(triples[i], triples[pick.uniform_int(i + 1)]);
    if (static_cast<int>(triples.size()) > trivial_samples)
      triples.resize(trivial_samples);
    int easy_hits = 0;
    Rng dummy(0);
    const int n_agents = eval_env->config().n_agents;
    for (const auto& [a, b, g] : triples) {
      JointState state = eval_env->reset_to(a, b, g);
      while (true) {
        const AgentId active = state.active;
        const int obs =
            eval_env->default_observation_maps()[active](state.interface,
                                                         state.privates[active]);
        int local = 0;
        double best = rated.q_alpha(active).evaluate(obs, 0);
        for (int l = 1; l < eval_env->n_local_actions(active); ++l) {
          const double v = rated.q_alpha(active).evaluate(obs, l);
          if (v > best) {
            best = v;
            local = l;
          }
        }
        const auto cands = eval_env->decision_candidates(state, dummy);
        const AgentId succ =
            select_successor(rated.q_beta(active), obs, cands, 0.0, n_agents, dummy);
        const StepOutcome out = eval_env->step(state, {local, succ}, dummy);
        if (out.terminated) {
          if (out.reward > 0.5) ++easy_hits;
          break;
        }
        state = out.next;
      }
    }
    rec.aux_metric =
        triples.empty() ? std::nan("")
                        : static_cast<double>(easy_hits) / triples.size();
    rec.epochs_used = trainer.global_epoch();
    rec.wall_seconds = now_seconds() - t0;
    rows[idx] = std::move(rec);
  });
  return finish(std::move(rows));
}

// ---------------------------------------------------------------------------

ExperimentResult run_oracle_check(const ExperimentConfig& cfg) {
  if (cfg.axis.name != "card_interface")
    throw std::invalid_argument("oracle-check: expected axis 'card_interface'");
  const auto cards = detail::axis_numeric(cfg.axis);
  const double tolerance = map_num(cfg.protocol, "tolerance", 1e-2);
  const std::string hash = config_hash(cfg);
  const int n_axis = static_cast<int>(cards.size());
  const int n_seeds = static_cast<int>(cfg.seeds.size());

  std::vector<RunRecord> rows(n_axis * n_seeds);
  detail::for_each_cell(n_axis * n_seeds, [&](int idx) {
    const int ai = idx / n_seeds, si = idx % n_seeds;
    const std::uint64_t seed = cfg.seeds[si];
    const double t0 = now_seconds();
    RunRecord rec = blank_record(cfg, hash, ai, si, cards[ai]);

    KvMap env_keys = cfg.env;
    env_keys["small_instance"] = "1";
    env_keys["card_interface"] = cfg.axis.values[ai];
    SyntheticSpec spec = synth_spec_for(env_keys, seed);
    auto env = build_synthetic(spec);
    auto maps = env->default_observation_maps();
    const auto exact = extract_latent_smdp_exact(*env->primitive_model(), spec.horizon);
    const auto oracle = solve_decision_form(exact.latent, 1e-12);
    const int n_states = exact.latent.smdp.n_states;
    const int n_agents = exact.latent.n_agents;

    LearnerConfig lc = detail::learner_from_map(cfg.learner);
    lc.seed = derive_seed(seed, "learner-init", ai);
    IcqTrainer trainer(*env, maps, lc);
    Rng train_rng = Rng::substream(seed, "train", ai);
    trainer.train(train_rng);

    double worst = 0.0;
    for (int m = 0; m < n_states; ++m) {
      for (int i = 0; i < n_agents; ++i) {
        if (exact.pi_state_agent[m * n_agents + i] <= 0.0) continue;
        const int obs = maps[i](m, 0);
        for (int a : exact.latent.smdp.admissible[m]) {
          if (a == i) continue;
          worst = std::max(worst, std::abs(trainer.q_beta(i).evaluate(obs, a) -
                                           oracle.qval(i, m, a)));
        }
      }
    }
    rec.error = worst;
    rec.epochs_used = trainer.global_epoch();
    rec.flagged = !std::isfinite(worst) || worst > tolerance;
    rec.wall_seconds = now_seconds() - t0;
    rows[idx] = std::move(rec);
  });
  return finish(std::move(rows));
}

}  // namespace icsmdp
