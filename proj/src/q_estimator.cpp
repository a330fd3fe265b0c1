#include "icsmdp/q_estimator.hpp"

#include <cmath>
#include <stdexcept>

namespace icsmdp {
namespace {

void check_target(double target) {
  if (!std::isfinite(target)) {
    throw std::invalid_argument("QEstimator::update: non-finite target rejected");
  }
}

std::vector<int> mlp_widths(int card_obs, const std::vector<int>& hidden, int n_actions) {
  std::vector<int> widths;
  widths.push_back(card_obs);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(n_actions);
  return widths;
}

}  // namespace

TabularQ::TabularQ(int card_obs, int n_actions, double init)
    : card_obs_(card_obs), n_actions_(n_actions) {
  if (card_obs < 1 || n_actions < 1) {
    throw std::invalid_argument("TabularQ: dimensions must be positive");
  }
  table_.assign(static_cast<std::size_t>(card_obs) * n_actions, init);
  counts_.assign(table_.size(), 0);
}

std::size_t TabularQ::idx(int obs, int action) const {
  if (obs < 0 || obs >= card_obs_ || action < 0 || action >= n_actions_) {
    throw std::out_of_range("TabularQ: cell index out of range");
  }
  return static_cast<std::size_t>(obs) * n_actions_ + action;
}

double TabularQ::evaluate(int obs, int action) const { return table_[idx(obs, action)]; }

void TabularQ::update(int obs, int action, double target, double step_size) {
  check_target(target);
  if (!(step_size > 0.0)) {
    throw std::invalid_argument("TabularQ::update: step size must be positive");
  }
  const std::size_t k = idx(obs, action);
  table_[k] += 2.0 * step_size * (target - table_[k]);
  counts_[k] += 1;
}

long long TabularQ::update_count(int obs, int action) const {
  return counts_[idx(obs, action)];
}

nlohmann::json TabularQ::checkpoint() const {
  return {{"backend", "tabular"},
          {"card_obs", card_obs_},
          {"n_actions", n_actions_},
          {"table", table_},
          {"counts", counts_}};
}

void TabularQ::restore(const nlohmann::json& blob) {
  if (blob.at("card_obs").get<int>() != card_obs_ ||
      blob.at("n_actions").get<int>() != n_actions_) {
    throw std::runtime_error("TabularQ::restore: shape mismatch");
  }
  blob.at("table").get_to(table_);
  blob.at("counts").get_to(counts_);
}

MlpQ::MlpQ(int card_obs, int n_actions, const std::vector<int>& hidden, double grad_clip,
           Rng& rng)
    : card_obs_(card_obs),
      n_actions_(n_actions),
      grad_clip_(grad_clip),
      net_(mlp_widths(card_obs, hidden, n_actions), rng) {}

std::vector<double> MlpQ::one_hot(int obs) const {
  if (obs < 0 || obs >= card_obs_) {
    throw std::out_of_range("MlpQ: observation id out of range");
  }
  std::vector<double> x(card_obs_, 0.0);
  x[obs] = 1.0;
  return x;
}

double MlpQ::evaluate(int obs, int action) const {
  if (action < 0 || action >= n_actions_) {
    throw std::out_of_range("MlpQ: action id out of range");
  }
  return net_.forward(one_hot(obs))[action];
}

void MlpQ::update(int obs, int action, double target, double step_size) {
  check_target(target);
  if (!(step_size > 0.0)) {
    throw std::invalid_argument("MlpQ::update: step size must be positive");
  }
  net_.sgd_step(one_hot(obs), action, target, step_size, grad_clip_);
  updates_ += 1;
}

nlohmann::json MlpQ::checkpoint() const {
  return {{"backend", "mlp"},
          {"card_obs", card_obs_},
          {"n_actions", n_actions_},
          {"updates", updates_},
          {"net", net_.checkpoint()}};
}

void MlpQ::restore(const nlohmann::json& blob) {
  if (blob.at("card_obs").get<int>() != card_obs_ ||
      blob.at("n_actions").get<int>() != n_actions_) {
    throw std::runtime_error("MlpQ::restore: shape mismatch");
  }
  updates_ = blob.at("updates").get<long long>();
  net_.restore(blob.at("net"));
}

}  // namespace icsmdp
