#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "icsmdp/env.hpp"
#include "icsmdp/observation_map.hpp"
#include "icsmdp/q_estimator.hpp"
#include "icsmdp/rng.hpp"
#include "icsmdp/types.hpp"

#include "json.hpp"

namespace icsmdp {

// The three scalars that cross the agent boundary at a handoff: the
// successor's bootstrap value, the finished option's duration, and its
// accumulated discounted reward.  Nothing else is shared.
struct HandoffMessage {
  double bootstrap = 0.0;
  int duration = 0;
  double option_reward = 0.0;
};

// target = R_k + gamma^tau * b
double bellman_target(const HandoffMessage& msg, double gamma);

// 1 / (2 * nu * lambda0 * (k+1)); throws std::domain_error on bad constants.
double theorem_step_size(long long k, double nu, double lambda0);

// eta0 / (1 + k / k0)
double default_step_size(long long k, double eta0, double k0);

struct LearnerConfig {
  enum class Backend { kTabular, kMlp };
  enum class StepSchedule { kDefault, kTheorem, kConstant };

  Backend backend = Backend::kTabular;
  StepSchedule schedule = StepSchedule::kDefault;
  double eta0 = 0.2;
  double k0 = 1000.0;
  double constant_eta = 0.05;
  double nu = 0.5;        // theorem schedule
  double lambda0 = 1.0;   // theorem schedule

  double eps0 = 1.0;
  double eps_floor = 0.05;
  // Per-epoch decay factor; <= 0 means "choose so the floor is reached halfway
  // through the budget".
  double eps_decay = 0.0;
  long long budget_epochs = 10000;

  bool adaptable = false;
  // Adaptable-mode handoff bootstrap: true reads the successor's local-action
  // head, false reads its successor-selection head.
  bool alpha_bootstrap = true;

  std::vector<int> mlp_hidden = {64, 64};
  double grad_clip = 10.0;
  double q_init = 0.0;
  std::uint64_t seed = 0;  // parameter initialization

  double resolved_eps_decay() const;
  double epsilon_at(long long epoch) const;
  double step_size_at(long long cell_count) const;
  nlohmann::json to_json() const;
};

// One completed decision epoch as the predecessor saw it.
struct EpochTransition {
  long long epoch = 0;       // global epoch index at update time
  AgentId predecessor = 0;
  int obs = 0;               // predecessor's epoch-start observation
  AgentId successor = 0;     // chosen successor (kStop allowed)
  double option_reward = 0.0;
  int duration = 0;
  double target = 0.0;
  double q_before = 0.0;
  double q_after = 0.0;
  int successor_obs = -1;    // -1 when terminal (STOP or horizon)
};

// Epsilon-greedy over admissible successors: with probability 1-eps the
// argmax of q(obs, slot(c)), ties to the lowest agent id with STOP last;
// otherwise uniform.  slot(c) maps agent c to column c and STOP to column
// n_agents.
AgentId select_successor(const QEstimator& q, int obs,
                         const std::vector<AgentId>& admissible, double epsilon,
                         int n_agents, Rng& rng);

// Successor-side bootstrap: max over the successor's admissible choices at its
// own observation; 0 when the epoch terminated (STOP or horizon).
double compute_bootstrap(const QEstimator& q_successor, int successor_obs,
                         const std::vector<AgentId>& admissible, int n_agents);

// Runs the decentralized training protocol on one environment instance.  One
// trainer owns all per-agent estimators; all cross-agent flow at handoffs is
// funnelled through HandoffMessage.
class IcqTrainer {
 public:
  IcqTrainer(Environment& env, std::vector<ObservationMap> maps, LearnerConfig config);

  struct EpisodeResult {
    double discounted_return = 0.0;
    double undiscounted_return = 0.0;
    int n_steps = 0;
    int n_handoffs = 0;
    int n_epochs_completed = 0;       // handoffs that produced an update sample
    long long scalar_transmissions = 0;  // 3 per handoff message
    std::vector<EpochTransition> transitions;
  };

  // One full episode (reset to STOP/horizon).  learn=false performs no
  // updates and does not advance the global epoch counter.  eps_override >= 0
  // fixes epsilon (0 gives the greedy policy).
  EpisodeResult run_episode(Rng& rng, bool learn = true, double eps_override = -1.0,
                            bool record_transitions = false);

  struct TrainSummary {
    long long episodes = 0;
    long long epochs = 0;
    long long steps = 0;
  };

  // Episodes until the global epoch counter reaches the budget.  The callback
  // (if set) runs after each episode with the trainer in a consistent state.
  TrainSummary train(Rng& rng,
                     const std::function<void(const EpisodeResult&, long long)>& after_episode = {});

  struct EvalResult {
    double mean_discounted = 0.0;
    double mean_undiscounted = 0.0;
    double stderr_discounted = 0.0;
    std::vector<double> discounted;  // per episode
  };

  // Greedy evaluation over fresh substreams of eval_seed; identical seeds give
  // identical episode randomness across trainers on the same environment,
  // which makes paired comparisons common-random-number comparisons.
  EvalResult evaluate(std::uint64_t eval_seed, int n_episodes);

  long long global_epoch() const { return global_epoch_; }
  const LearnerConfig& config() const { return config_; }
  int n_agents() const { return n_agents_; }

  QEstimator& q_beta(AgentId agent) { return *beta_[agent]; }
  const QEstimator& q_beta(AgentId agent) const { return *beta_[agent]; }
  QEstimator& q_alpha(AgentId agent) { return *alpha_[agent]; }

  // Slots are exposed so tests can wrap estimators in tracking decorators.
  std::unique_ptr<QEstimator>& beta_slot(AgentId agent) { return beta_[agent]; }
  std::unique_ptr<QEstimator>& alpha_slot(AgentId agent) { return alpha_[agent]; }

  void set_transition_logger(std::function<void(const EpochTransition&)> logger) {
    logger_ = std::move(logger);
  }

  nlohmann::json checkpoint() const;
  void restore(const nlohmann::json& blob);

 private:
  int successor_slot(AgentId c) const { return is_stop(c) ? n_agents_ : c; }
  double beta_step_size(const QEstimator& q, int obs, int slot) const;
  int select_local(AgentId agent, int obs, double epsilon, Rng& rng) const;
  std::vector<AgentId> successor_actions_for(AgentId agent, int interface) const;

  Environment& env_;
  std::vector<ObservationMap> maps_;
  LearnerConfig config_;
  int n_agents_ = 0;
  long long global_epoch_ = 0;
  std::vector<std::unique_ptr<QEstimator>> beta_;
  std::vector<std::unique_ptr<QEstimator>> alpha_;  // empty unless adaptable
  std::function<void(const EpochTransition&)> logger_;
};

// Streams epoch transitions to CSV with a fixed header.
class TransitionCsvLogger {
 public:
  explicit TransitionCsvLogger(const std::string& path);
  ~TransitionCsvLogger();
  std::function<void(const EpochTransition&)> sink();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace icsmdp
