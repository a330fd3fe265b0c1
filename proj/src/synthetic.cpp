#include "icsmdp/envs/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace icsmdp {
namespace {

// Sparse row-stochastic row: `degree` distinct targets with weights bounded
// away from zero.  `forced` (if >= 0) is always included, which keeps
// interface-memory kernels strongly connected via a +1 ring edge.
PrimitiveModel::SparseRow make_sparse_row(int n, int degree, Rng& g, int forced = -1) {
  PrimitiveModel::SparseRow row;
  degree = std::min(degree, n);
  std::vector<int> targets;
  if (forced >= 0) targets.push_back(forced);
  while (static_cast<int>(targets.size()) < degree) {
    int t = g.uniform_int(n);
    if (std::find(targets.begin(), targets.end(), t) == targets.end())
      targets.push_back(t);
  }
  std::sort(targets.begin(), targets.end());
  double total = 0.0;
  std::vector<double> w(targets.size());
  for (auto& wi : w) {
    wi = g.uniform(0.1, 1.0);
    total += wi;
  }
  for (size_t j = 0; j < targets.size(); ++j)
    row.emplace_back(targets[j], w[j] / total);
  return row;
}

// Like make_sparse_row, but targets are confined to ring distance <= window
// of `center` (the +1 ring edge is always included), so consecutive interface
// symbols stay close and block structure persists across steps.
PrimitiveModel::SparseRow make_windowed_row(int n, int degree, int window, int center,
                                            Rng& g) {
  PrimitiveModel::SparseRow row;
  std::vector<int> pool;
  for (int d = -window; d <= window; ++d)
    pool.push_back(((center + d) % n + n) % n);
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  degree = std::min(degree, static_cast<int>(pool.size()));
  const int ring = (center + 1) % n;
  std::vector<int> targets{ring};
  while (static_cast<int>(targets.size()) < degree) {
    int t = pool[g.uniform_int(static_cast<int>(pool.size()))];
    if (std::find(targets.begin(), targets.end(), t) == targets.end())
      targets.push_back(t);
  }
  std::sort(targets.begin(), targets.end());
  double total = 0.0;
  std::vector<double> w(targets.size());
  for (auto& wi : w) {
    wi = g.uniform(0.1, 1.0);
    total += wi;
  }
  for (size_t j = 0; j < targets.size(); ++j)
    row.emplace_back(targets[j], w[j] / total);
  return row;
}

}  // namespace

SyntheticEnv::SyntheticEnv(const SyntheticSpec& spec) : spec_(spec) {
  if (spec_.n_core < 1 || spec_.n_stations < 1)
    throw std::invalid_argument("SyntheticEnv: n_core and n_stations must be >= 1");
  if (!(spec_.p_handoff > 0.0 && spec_.p_handoff <= 1.0))
    throw std::invalid_argument("SyntheticEnv: p_handoff must lie in (0, 1]");
  if (spec_.out_degree < 1)
    throw std::invalid_argument("SyntheticEnv: out_degree must be >= 1");
  fresh_levels_ = spec_.n_stations > 1 ? 2 : 1;
  station_offset_ = std::max(1, spec_.card_interface / spec_.n_stations);

  cfg_.n_agents = spec_.n_agents;
  cfg_.card_latent = spec_.card_latent();
  cfg_.card_interface = spec_.card_interface;
  cfg_.horizon = spec_.horizon;
  cfg_.discount = spec_.discount;
  cfg_.seed = spec_.kernel_seed;
  cfg_.params["family"] = "synthetic";
  cfg_.params["p_handoff"] = std::to_string(spec_.p_handoff);
  cfg_.params["rho"] = std::to_string(spec_.rho);
  cfg_.validate();

  // All tables are generated in a fixed order from named substreams, so a
  // rebuild from the same spec is bitwise identical.
  Rng gk = Rng::substream(spec_.kernel_seed, "synthetic-core");
  core_k_.resize(static_cast<size_t>(spec_.n_agents) * spec_.n_local_actions * spec_.n_core);
  for (int i = 0; i < spec_.n_agents; ++i)
    for (int a = 0; a < spec_.n_local_actions; ++a)
      for (int c = 0; c < spec_.n_core; ++c)
        core_k_[(static_cast<size_t>(i) * spec_.n_local_actions + a) * spec_.n_core + c] =
            make_sparse_row(spec_.n_core, spec_.out_degree, gk);

  Rng gm = Rng::substream(spec_.kernel_seed, "synthetic-interface");
  if (spec_.interface_memory) {
    iface_k_.resize(static_cast<size_t>(spec_.n_agents) * spec_.card_interface);
    for (int i = 0; i < spec_.n_agents; ++i)
      for (int m = 0; m < spec_.card_interface; ++m)
        iface_k_[static_cast<size_t>(i) * spec_.card_interface + m] =
            spec_.iface_window > 0
                ? make_windowed_row(spec_.card_interface, spec_.out_degree,
                                    spec_.iface_window, m, gm)
                : make_sparse_row(spec_.card_interface, spec_.out_degree, gm,
                                  (m + 1) % spec_.card_interface);
  } else {
    iface_k_.resize(static_cast<size_t>(spec_.n_agents) * spec_.n_core);
    for (int i = 0; i < spec_.n_agents; ++i)
      for (int c = 0; c < spec_.n_core; ++c)
        iface_k_[static_cast<size_t>(i) * spec_.n_core + c] =
            make_sparse_row(spec_.card_interface, spec_.out_degree, gm);
  }

  Rng gp = Rng::substream(spec_.kernel_seed, "synthetic-policy");
  internal_policy_.resize(spec_.n_agents);
  for (int i = 0; i < spec_.n_agents; ++i) {
    internal_policy_[i].resize(spec_.n_local_actions);
    double total = 0.0;
    for (auto& p : internal_policy_[i]) {
      p = gp.uniform(0.2, 1.0);
      total += p;
    }
    for (auto& p : internal_policy_[i]) p /= total;
  }

  Rng gr = Rng::substream(spec_.reward_seed, "synthetic-reward");
  reward_.resize(static_cast<size_t>(cfg_.card_latent) * spec_.card_interface);
  if (spec_.reward_blocks > 0) {
    const int blocks = std::min(spec_.reward_blocks, spec_.card_interface);
    std::vector<double> bias(blocks);
    for (auto& b : bias) b = gr.uniform(-1.0, 1.0);
    for (int x = 0; x < cfg_.card_latent; ++x)
      for (int m = 0; m < spec_.card_interface; ++m)
        reward_[static_cast<size_t>(x) * spec_.card_interface + m] =
            bias[m * blocks / spec_.card_interface] + 0.5 * gr.uniform(-1.0, 1.0);
  } else {
    for (auto& r : reward_) r = gr.uniform(-1.0, 1.0);
  }
}

int SyntheticEnv::latent_id(int core, int station, int fresh) const {
  return (core * spec_.n_stations + station) * fresh_levels_ +
         (fresh_levels_ > 1 ? fresh : 0);
}

int SyntheticEnv::core_of(int latent) const {
  return latent / (spec_.n_stations * fresh_levels_);
}

int SyntheticEnv::station_of(int latent) const {
  return (latent / fresh_levels_) % spec_.n_stations;
}

int SyntheticEnv::fresh_of(int latent) const {
  return fresh_levels_ > 1 ? latent % fresh_levels_ : 1;
}

int SyntheticEnv::sample_row(const Row& row, Rng& rng) const {
  double u = rng.uniform();
  double acc = 0.0;
  for (const auto& [t, p] : row) {
    acc += p;
    if (u < acc) return t;
  }
  return row.back().first;
}

const SyntheticEnv::Row& SyntheticEnv::iface_row(AgentId agent, int core_next,
                                                 int interface) const {
  if (spec_.interface_memory)
    return iface_k_[static_cast<size_t>(agent) * spec_.card_interface + interface];
  return iface_k_[static_cast<size_t>(agent) * spec_.n_core + core_next];
}

JointState SyntheticEnv::reset(Rng& rng) const {
  JointState s;
  int core = rng.uniform_int(spec_.n_core);
  int station = spec_.n_stations > 1 ? rng.uniform_int(spec_.n_stations) : 0;
  s.latent = latent_id(core, station, 1);
  s.interface = rng.uniform_int(spec_.card_interface);
  s.privates.assign(spec_.n_agents, 0);
  s.active = rng.uniform_int(spec_.n_agents);
  s.step = 0;
  return s;
}

StepOutcome SyntheticEnv::step(const JointState& state, const JointAction& action,
                               Rng& rng) const {
  check_step_args(state, action);
  const bool handoff = action.successor != state.active;
  const int i = state.active;
  const int core = core_of(state.latent);
  const int station = station_of(state.latent);
  const int fresh = fresh_of(state.latent);

  StepOutcome out;
  out.reward = reward_[static_cast<size_t>(state.latent) * spec_.card_interface +
                       state.interface] -
               (handoff ? spec_.handoff_cost : 0.0);

  int core_next = sample_row(
      core_k_[(static_cast<size_t>(i) * spec_.n_local_actions + action.local) *
                  spec_.n_core + core],
      rng);
  int station_next = station;
  if (handoff && spec_.n_stations > 1) {
    double shift_p = fresh ? spec_.q_quick : spec_.q_slow;
    if (rng.bernoulli(shift_p)) station_next = rng.uniform_int(spec_.n_stations);
  }
  int m_base = sample_row(iface_row(i, core_next, state.interface), rng);
  int m_next = spec_.n_stations > 1
                   ? (m_base + station_next * station_offset_) % spec_.card_interface
                   : m_base;

  out.next = state;
  out.next.latent = latent_id(core_next, station_next, handoff ? 1 : 0);
  out.next.interface = m_next;
  out.next.active = action.successor;
  out.next.step = state.step + 1;
  out.handoff = handoff;
  out.terminated = is_stop(action.successor) || out.next.step >= spec_.horizon;
  return out;
}

std::vector<AgentId> SyntheticEnv::admissible_successors(int) const {
  std::vector<AgentId> out(spec_.n_agents);
  std::iota(out.begin(), out.end(), 0);
  out.push_back(kStop);
  return out;
}

std::vector<AgentId> SyntheticEnv::decision_candidates(const JointState& state,
                                                       Rng& rng) const {
  if (!rng.bernoulli(spec_.p_handoff)) return {};
  std::vector<AgentId> out;
  out.reserve(spec_.n_agents);
  for (int c = 0; c < spec_.n_agents; ++c)
    if (c != state.active) out.push_back(c);
  out.push_back(kStop);
  return out;
}

int SyntheticEnv::sample_internal_action(const JointState& state, Rng& rng) const {
  const auto& pi = internal_policy_[state.active];
  double u = rng.uniform();
  double acc = 0.0;
  for (int a = 0; a < static_cast<int>(pi.size()); ++a) {
    acc += pi[a];
    if (u < acc) return a;
  }
  return static_cast<int>(pi.size()) - 1;
}

std::vector<ObservationMap> SyntheticEnv::default_observation_maps() const {
  std::vector<ObservationMap> maps;
  maps.reserve(spec_.n_agents);
  for (int i = 0; i < spec_.n_agents; ++i)
    maps.push_back(make_retention_map(i, spec_.card_interface, spec_.rho));
  return maps;
}

const PrimitiveModel* SyntheticEnv::primitive_model() const {
  if (model_) return model_.get();
  auto pm = std::make_unique<PrimitiveModel>();
  pm->n_agents = spec_.n_agents;
  pm->card_latent = cfg_.card_latent;
  pm->card_interface = spec_.card_interface;
  pm->horizon = spec_.horizon;
  pm->discount = spec_.discount;
  pm->p_handoff = spec_.p_handoff;
  pm->handoff_cost = spec_.handoff_cost;
  pm->reward = reward_;

  const int nz = pm->n_z();
  pm->self_kernel.assign(spec_.n_agents, std::vector<PrimitiveModel::SparseRow>(nz));
  pm->hand_kernel.assign(spec_.n_agents, std::vector<PrimitiveModel::SparseRow>(nz));

  for (int i = 0; i < spec_.n_agents; ++i) {
    // Internal-policy marginal of the core kernel.
    std::vector<std::vector<double>> core_marg(spec_.n_core,
                                               std::vector<double>(spec_.n_core, 0.0));
    for (int a = 0; a < spec_.n_local_actions; ++a)
      for (int c = 0; c < spec_.n_core; ++c)
        for (const auto& [t, p] :
             core_k_[(static_cast<size_t>(i) * spec_.n_local_actions + a) * spec_.n_core + c])
          core_marg[c][t] += internal_policy_[i][a] * p;

    for (int x = 0; x < cfg_.card_latent; ++x) {
      const int core = core_of(x);
      const int station = station_of(x);
      const int fresh = fresh_of(x);
      for (int m = 0; m < spec_.card_interface; ++m) {
        const int z = pm->z_of(x, m);
        for (int cn = 0; cn < spec_.n_core; ++cn) {
          double pc = core_marg[core][cn];
          if (pc <= 0.0) continue;
          const Row& mrow = iface_row(i, cn, m);
          // Self step: station kept, fresh cleared.
          for (const auto& [mb, pmb] : mrow) {
            int mn = spec_.n_stations > 1
                         ? (mb + station * station_offset_) % spec_.card_interface
                         : mb;
            pm->self_kernel[i][z].emplace_back(
                pm->z_of(latent_id(cn, station, 0), mn), pc * pmb);
          }
          // Handoff step: station may shift, fresh set.
          double shift_p = spec_.n_stations > 1
                               ? (fresh ? spec_.q_quick : spec_.q_slow)
                               : 0.0;
          for (int sn = 0; sn < spec_.n_stations; ++sn) {
            double ps = (sn == station ? 1.0 - shift_p : 0.0) + shift_p / spec_.n_stations;
            if (ps <= 0.0) continue;
            for (const auto& [mb, pmb] : mrow) {
              int mn = spec_.n_stations > 1
                           ? (mb + sn * station_offset_) % spec_.card_interface
                           : mb;
              pm->hand_kernel[i][z].emplace_back(
                  pm->z_of(latent_id(cn, sn, 1), mn), pc * ps * pmb);
            }
          }
        }
      }
    }
    // Merge duplicate targets.
    for (auto* kern : {&pm->self_kernel[i], &pm->hand_kernel[i]}) {
      for (auto& row : *kern) {
        std::sort(row.begin(), row.end());
        PrimitiveModel::SparseRow merged;
        for (const auto& [t, p] : row) {
          if (!merged.empty() && merged.back().first == t)
            merged.back().second += p;
          else
            merged.emplace_back(t, p);
        }
        row = std::move(merged);
      }
    }
  }

  // Uniform initial state: core and station uniform, fresh set, m uniform.
  pm->rho0_z.assign(nz, 0.0);
  double p0 = 1.0 / (spec_.n_core * spec_.n_stations * spec_.card_interface);
  for (int c = 0; c < spec_.n_core; ++c)
    for (int s = 0; s < spec_.n_stations; ++s)
      for (int m = 0; m < spec_.card_interface; ++m)
        pm->rho0_z[pm->z_of(latent_id(c, s, 1), m)] += p0;

  model_ = std::move(pm);
  return model_.get();
}

std::unique_ptr<SyntheticEnv> build_synthetic(const SyntheticSpec& spec) {
  return std::make_unique<SyntheticEnv>(spec);
}

SyntheticSpec small_instance_spec(std::uint64_t seed, int n_agents, int card_interface) {
  SyntheticSpec s;
  s.n_agents = n_agents;
  s.n_core = 1;
  s.n_stations = 1;
  s.card_interface = card_interface;
  s.horizon = 200;
  s.discount = 0.5;
  s.rho = 1.0;
  s.p_handoff = 0.6;
  s.out_degree = 3;
  s.n_local_actions = 2;
  s.interface_memory = true;
  s.kernel_seed = derive_seed(seed, "small-kernel");
  s.reward_seed = derive_seed(seed, "small-reward");
  return s;
}

}  // namespace icsmdp
