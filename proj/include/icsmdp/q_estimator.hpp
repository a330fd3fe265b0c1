#pragma once

#include <memory>
#include <string>
#include <vector>

#include "icsmdp/mlp.hpp"
#include "icsmdp/rng.hpp"

#include "json.hpp"

namespace icsmdp {

// Per-agent action-value estimator over (observation id, action id).  Action
// ids are whatever the caller indexes with: successor slots for the handoff
// head, local-action slots for the adaptable head.
class QEstimator {
 public:
  virtual ~QEstimator() = default;
  virtual int card_obs() const = 0;
  virtual int n_actions() const = 0;
  virtual double evaluate(int obs, int action) const = 0;
  // One SGD step toward target; throws std::invalid_argument on a non-finite
  // target so a diverging run fails loudly instead of poisoning the table.
  virtual void update(int obs, int action, double target, double step_size) = 0;
  // Number of updates already applied at this cell (MLP backends count
  // globally, since every parameter moves on every step).
  virtual long long update_count(int obs, int action) const = 0;
  virtual std::string backend() const = 0;
  virtual nlohmann::json checkpoint() const = 0;
  virtual void restore(const nlohmann::json& blob) = 0;
};

// Plain table.  update applies cell += 2 * step_size * (target - cell): the
// factor two folds the gradient of the squared error into the classical
// convex-combination form, so tabular and MLP backends share one step-size
// schedule.
class TabularQ : public QEstimator {
 public:
  TabularQ(int card_obs, int n_actions, double init = 0.0);

  int card_obs() const override { return card_obs_; }
  int n_actions() const override { return n_actions_; }
  double evaluate(int obs, int action) const override;
  void update(int obs, int action, double target, double step_size) override;
  long long update_count(int obs, int action) const override;
  std::string backend() const override { return "tabular"; }
  nlohmann::json checkpoint() const override;
  void restore(const nlohmann::json& blob) override;

  const std::vector<double>& table() const { return table_; }

 private:
  std::size_t idx(int obs, int action) const;
  int card_obs_ = 0;
  int n_actions_ = 0;
  std::vector<double> table_;
  std::vector<long long> counts_;
};

// One-hot observation encoding feeding a rectifier MLP with one output head
// per action; update is a single backprop step on the half-squared loss.
class MlpQ : public QEstimator {
 public:
  MlpQ(int card_obs, int n_actions, const std::vector<int>& hidden, double grad_clip,
       Rng& rng);

  int card_obs() const override { return card_obs_; }
  int n_actions() const override { return n_actions_; }
  double evaluate(int obs, int action) const override;
  void update(int obs, int action, double target, double step_size) override;
  long long update_count(int, int) const override { return updates_; }
  std::string backend() const override { return "mlp"; }
  nlohmann::json checkpoint() const override;
  void restore(const nlohmann::json& blob) override;

  Mlp& net() { return net_; }

 private:
  std::vector<double> one_hot(int obs) const;
  int card_obs_ = 0;
  int n_actions_ = 0;
  double grad_clip_ = 0.0;
  long long updates_ = 0;
  Mlp net_;
};

}  // namespace icsmdp
