#include "icsmdp/learner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace icsmdp {

double bellman_target(const HandoffMessage& msg, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("bellman_target: gamma must lie in (0, 1)");
  }
  if (msg.duration < 1) {
    throw std::invalid_argument("bellman_target: duration must be >= 1");
  }
  return msg.option_reward + std::pow(gamma, msg.duration) * msg.bootstrap;
}

double theorem_step_size(long long k, double nu, double lambda0) {
  if (!(nu > 0.0) || !(lambda0 > 0.0)) {
    throw std::domain_error("theorem_step_size: nu and lambda0 must be positive");
  }
  if (k < 0) throw std::domain_error("theorem_step_size: k must be >= 0");
  return 1.0 / (2.0 * nu * lambda0 * static_cast<double>(k + 1));
}

double default_step_size(long long k, double eta0, double k0) {
  return eta0 / (1.0 + static_cast<double>(k) / k0);
}

double LearnerConfig::resolved_eps_decay() const {
  if (eps_decay > 0.0) return eps_decay;
  if (budget_epochs <= 0 || eps_floor >= eps0 || eps_floor <= 0.0) return 1.0;
  // Reach the floor halfway through the budget.
  const double half = static_cast<double>(budget_epochs) / 2.0;
  return std::exp(std::log(eps_floor / eps0) / half);
}

double LearnerConfig::epsilon_at(long long epoch) const {
  const double d = resolved_eps_decay();
  return std::max(eps_floor, eps0 * std::pow(d, static_cast<double>(epoch)));
}

double LearnerConfig::step_size_at(long long cell_count) const {
  switch (schedule) {
    case StepSchedule::kDefault:
      return default_step_size(cell_count, eta0, k0);
    case StepSchedule::kTheorem:
      return theorem_step_size(cell_count, nu, lambda0);
    case StepSchedule::kConstant:
      return constant_eta;
  }
  throw std::logic_error("LearnerConfig: unknown schedule");
}

nlohmann::json LearnerConfig::to_json() const {
  return {{"backend", backend == Backend::kTabular ? "tabular" : "mlp"},
          {"schedule", schedule == StepSchedule::kDefault
                           ? "default"
                           : (schedule == StepSchedule::kTheorem ? "theorem" : "constant")},
          {"eta0", eta0},
          {"k0", k0},
          {"constant_eta", constant_eta},
          {"nu", nu},
          {"lambda0", lambda0},
          {"eps0", eps0},
          {"eps_floor", eps_floor},
          {"eps_decay", eps_decay},
          {"budget_epochs", budget_epochs},
          {"adaptable", adaptable},
          {"alpha_bootstrap", alpha_bootstrap},
          {"mlp_hidden", mlp_hidden},
          {"grad_clip", grad_clip},
          {"q_init", q_init},
          {"seed", seed}};
}

AgentId select_successor(const QEstimator& q, int obs,
                         const std::vector<AgentId>& admissible, double epsilon,
                         int n_agents, Rng& rng) {
  if (admissible.empty()) {
    throw std::invalid_argument("select_successor: admissible set must be non-empty");
  }
  if (epsilon > 0.0 && rng.bernoulli(epsilon)) {
    return admissible[rng.uniform_int(static_cast<int>(admissible.size()))];
  }
  // Deterministic order: agent ids ascending, STOP considered last.
  std::vector<AgentId> order(admissible);
  std::sort(order.begin(), order.end(), [](AgentId a, AgentId b) {
    if (is_stop(a)) return false;
    if (is_stop(b)) return true;
    return a < b;
  });
  AgentId best = order.front();
  double best_v = -std::numeric_limits<double>::infinity();
  for (AgentId c : order) {
    const int slot = is_stop(c) ? n_agents : c;
    const double v = q.evaluate(obs, slot);
    if (v > best_v) {
      best_v = v;
      best = c;
    }
  }
  return best;
}

double compute_bootstrap(const QEstimator& q_successor, int successor_obs,
                         const std::vector<AgentId>& admissible, int n_agents) {
  if (successor_obs < 0) return 0.0;  // terminal: no continuation value
  double best = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (AgentId c : admissible) {
    const int slot = is_stop(c) ? n_agents : c;
    best = std::max(best, q_successor.evaluate(successor_obs, slot));
    any = true;
  }
  return any ? best : 0.0;
}

IcqTrainer::IcqTrainer(Environment& env, std::vector<ObservationMap> maps,
                       LearnerConfig config)
    : env_(env), maps_(std::move(maps)), config_(config) {
  n_agents_ = env_.config().n_agents;
  if (static_cast<int>(maps_.size()) != n_agents_) {
    throw std::invalid_argument("IcqTrainer: one observation map per agent required");
  }
  if (!(config_.eps0 >= 0.0 && config_.eps0 <= 1.0) ||
      !(config_.eps_floor >= 0.0 && config_.eps_floor <= 1.0)) {
    throw std::invalid_argument("IcqTrainer: epsilon values must lie in [0, 1]");
  }
  if (config_.adaptable && !env_.adaptable()) {
    throw std::invalid_argument("IcqTrainer: environment has no adaptable local actions");
  }

  const int n_slots = n_agents_ + 1;  // agents plus STOP
  for (int i = 0; i < n_agents_; ++i) {
    const int card = maps_[i].card_obs();
    if (config_.backend == LearnerConfig::Backend::kTabular) {
      beta_.push_back(std::make_unique<TabularQ>(card, n_slots, config_.q_init));
    } else {
      Rng init = Rng::substream(config_.seed, "mlp-init-beta", i);
      beta_.push_back(std::make_unique<MlpQ>(card, n_slots, config_.mlp_hidden,
                                             config_.grad_clip, init));
    }
  }
  if (config_.adaptable) {
    for (int i = 0; i < n_agents_; ++i) {
      const int card = maps_[i].card_obs();
      const int n_local = env_.n_local_actions(i);
      if (config_.backend == LearnerConfig::Backend::kTabular) {
        alpha_.push_back(std::make_unique<TabularQ>(card, n_local, config_.q_init));
      } else {
        Rng init = Rng::substream(config_.seed, "mlp-init-alpha", i);
        alpha_.push_back(std::make_unique<MlpQ>(card, n_local, config_.mlp_hidden,
                                                config_.grad_clip, init));
      }
    }
  }
}

double IcqTrainer::beta_step_size(const QEstimator& q, int obs, int slot) const {
  return config_.step_size_at(q.update_count(obs, slot));
}

int IcqTrainer::select_local(AgentId agent, int obs, double epsilon, Rng& rng) const {
  const int n_local = alpha_[agent]->n_actions();
  if (epsilon > 0.0 && rng.bernoulli(epsilon)) return rng.uniform_int(n_local);
  int best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < n_local; ++a) {
    const double v = alpha_[agent]->evaluate(obs, a);
    if (v > best_v) {
      best_v = v;
      best = a;
    }
  }
  return best;
}

std::vector<AgentId> IcqTrainer::successor_actions_for(AgentId agent,
                                                       int interface) const {
  std::vector<AgentId> out;
  for (AgentId c : env_.admissible_successors(interface)) {
    if (c != agent) out.push_back(c);
  }
  return out;
}

IcqTrainer::EpisodeResult IcqTrainer::run_episode(Rng& rng, bool learn,
                                                  double eps_override,
                                                  bool record_transitions) {
  EpisodeResult res;
  const double gamma = env_.config().discount;
  JointState state = env_.reset(rng);

  AgentId epoch_agent = state.active;
  int epoch_obs = maps_[epoch_agent](state.interface, state.privates[epoch_agent]);
  double epoch_reward = 0.0;
  int epoch_tau = 0;
  bool first_step_of_epoch = true;

  while (true) {
    const double eps =
        eps_override >= 0.0 ? eps_override : config_.epsilon_at(global_epoch_);

    const auto candidates = env_.decision_candidates(state, rng);
    AgentId successor = state.active;
    if (!candidates.empty()) {
      const int cur_obs =
          maps_[state.active](state.interface, state.privates[state.active]);
      successor = select_successor(*beta_[state.active], cur_obs, candidates, eps,
                                   n_agents_, rng);
    }
    int local = 0;
    if (config_.adaptable) {
      const int cur_obs =
          maps_[state.active](state.interface, state.privates[state.active]);
      local = select_local(state.active, cur_obs, eps, rng);
    } else {
      local = env_.sample_internal_action(state, rng);
    }

    const StepOutcome out = env_.step(state, JointAction{local, successor}, rng);
    res.discounted_return += std::pow(gamma, state.step) * out.reward;
    res.undiscounted_return += out.reward;
    res.n_steps += 1;
    epoch_reward += std::pow(gamma, epoch_tau) * out.reward;
    epoch_tau += 1;

    if (config_.adaptable && first_step_of_epoch && learn) {
      // Local-action head: one update per epoch at its first step, against
      // the post-action observation valued through the handoff head.
      const int obs_plus =
          maps_[epoch_agent](out.next.interface, out.next.privates[epoch_agent]);
      double best = -std::numeric_limits<double>::infinity();
      bool any = false;
      for (AgentId c : successor_actions_for(epoch_agent, out.next.interface)) {
        const double v = beta_[epoch_agent]->evaluate(obs_plus, successor_slot(c));
        if (v > best) best = v;
        any = true;
      }
      const double y_alpha = out.reward + gamma * (any ? best : 0.0);
      auto& qa = *alpha_[epoch_agent];
      qa.update(epoch_obs, local, y_alpha,
                config_.step_size_at(qa.update_count(epoch_obs, local)));
    }
    first_step_of_epoch = false;

    if (out.handoff) {
      res.n_handoffs += 1;
      const bool terminal = is_stop(successor) || out.terminated;
      HandoffMessage msg;
      msg.duration = epoch_tau;
      msg.option_reward = epoch_reward;
      int succ_obs = -1;
      if (!terminal) {
        // The successor computes the bootstrap from its own observation and
        // its own parameters; only the scalar crosses back.
        succ_obs = maps_[successor](out.next.interface, out.next.privates[successor]);
        if (config_.adaptable && config_.alpha_bootstrap) {
          auto& qa = *alpha_[successor];
          double best = -std::numeric_limits<double>::infinity();
          for (int a = 0; a < qa.n_actions(); ++a) {
            best = std::max(best, qa.evaluate(succ_obs, a));
          }
          msg.bootstrap = best;
        } else {
          msg.bootstrap = compute_bootstrap(*beta_[successor], succ_obs,
                                            env_.epoch_actions(out.next), n_agents_);
        }
      }
      res.scalar_transmissions += 3;

      const double y = bellman_target(msg, gamma);
      const int slot = successor_slot(successor);
      auto& qb = *beta_[epoch_agent];
      EpochTransition tr;
      tr.epoch = global_epoch_;
      tr.predecessor = epoch_agent;
      tr.obs = epoch_obs;
      tr.successor = successor;
      tr.option_reward = epoch_reward;
      tr.duration = epoch_tau;
      tr.target = y;
      tr.successor_obs = succ_obs;
      tr.q_before = qb.evaluate(epoch_obs, slot);
      if (learn) {
        qb.update(epoch_obs, slot, y, beta_step_size(qb, epoch_obs, slot));
        global_epoch_ += 1;
      }
      tr.q_after = qb.evaluate(epoch_obs, slot);
      res.n_epochs_completed += 1;
      if (record_transitions) res.transitions.push_back(tr);
      if (logger_) logger_(tr);
    }

    if (out.terminated) break;
    state = out.next;
    if (out.handoff) {
      epoch_agent = state.active;
      epoch_obs = maps_[epoch_agent](state.interface, state.privates[epoch_agent]);
      epoch_reward = 0.0;
      epoch_tau = 0;
      first_step_of_epoch = true;
    }
  }
  return res;
}

IcqTrainer::TrainSummary IcqTrainer::train(
    Rng& rng, const std::function<void(const EpisodeResult&, long long)>& after_episode) {
  TrainSummary summary;
  while (global_epoch_ < config_.budget_epochs) {
    const EpisodeResult res = run_episode(rng, /*learn=*/true);
    summary.episodes += 1;
    summary.epochs = global_epoch_;
    summary.steps += res.n_steps;
    if (after_episode) after_episode(res, global_epoch_);
  }
  return summary;
}

IcqTrainer::EvalResult IcqTrainer::evaluate(std::uint64_t eval_seed, int n_episodes) {
  EvalResult out;
  for (int ep = 0; ep < n_episodes; ++ep) {
    Rng rng = Rng::substream(eval_seed, "eval-episode", ep);
    const EpisodeResult res = run_episode(rng, /*learn=*/false, /*eps_override=*/0.0);
    out.discounted.push_back(res.discounted_return);
    out.mean_discounted += res.discounted_return;
    out.mean_undiscounted += res.undiscounted_return;
  }
  if (n_episodes > 0) {
    out.mean_discounted /= n_episodes;
    out.mean_undiscounted /= n_episodes;
    double ss = 0.0;
    for (double v : out.discounted) {
      ss += (v - out.mean_discounted) * (v - out.mean_discounted);
    }
    if (n_episodes > 1) {
      out.stderr_discounted = std::sqrt(ss / (n_episodes - 1) / n_episodes);
    }
  }
  return out;
}

nlohmann::json IcqTrainer::checkpoint() const {
  nlohmann::json beta = nlohmann::json::array();
  for (const auto& q : beta_) beta.push_back(q->checkpoint());
  nlohmann::json alpha = nlohmann::json::array();
  for (const auto& q : alpha_) alpha.push_back(q->checkpoint());
  return {{"format_version", 1},
          {"config", config_.to_json()},
          {"global_epoch", global_epoch_},
          {"beta", beta},
          {"alpha", alpha}};
}

void IcqTrainer::restore(const nlohmann::json& blob) {
  if (blob.at("format_version").get<int>() != 1) {
    throw std::runtime_error("IcqTrainer::restore: unsupported checkpoint version");
  }
  const auto& beta = blob.at("beta");
  if (beta.size() != beta_.size()) {
    throw std::runtime_error("IcqTrainer::restore: agent count mismatch");
  }
  for (std::size_t i = 0; i < beta_.size(); ++i) beta_[i]->restore(beta[i]);
  const auto& alpha = blob.at("alpha");
  if (alpha.size() != alpha_.size()) {
    throw std::runtime_error("IcqTrainer::restore: adaptable head mismatch");
  }
  for (std::size_t i = 0; i < alpha_.size(); ++i) alpha_[i]->restore(alpha[i]);
  global_epoch_ = blob.at("global_epoch").get<long long>();
}

struct TransitionCsvLogger::Impl {
  std::ofstream out;
};

TransitionCsvLogger::TransitionCsvLogger(const std::string& path)
    : impl_(std::make_unique<Impl>()) {
  impl_->out.open(path);
  if (!impl_->out) {
    throw std::runtime_error("TransitionCsvLogger: cannot open " + path);
  }
  impl_->out << "epoch,predecessor,obs,successor,option_reward,tau,target,"
                "q_before,q_after\n";
}

TransitionCsvLogger::~TransitionCsvLogger() = default;

std::function<void(const EpochTransition&)> TransitionCsvLogger::sink() {
  return [impl = impl_.get()](const EpochTransition& tr) {
    impl->out << tr.epoch << ',' << tr.predecessor << ',' << tr.obs << ','
              << tr.successor << ',' << tr.option_reward << ',' << tr.duration << ','
              << tr.target << ',' << tr.q_before << ',' << tr.q_after << '\n';
  };
}

}  // namespace icsmdp
