#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace icsmdp {

// Deterministic, total map from (interface state, own private state) to an
// observation id.  This is the only channel through which learner code sees
// the world.  Maps are value types; the rule must be pure.
class ObservationMap {
 public:
  using Fn = std::function<int(int interface, int priv)>;

  ObservationMap() = default;
  ObservationMap(int agent, int card_obs, Fn fn, std::string name = "custom")
      : agent_(agent), card_obs_(card_obs), fn_(std::move(fn)), name_(std::move(name)) {
    if (card_obs_ < 1) throw std::invalid_argument("ObservationMap: card_obs must be >= 1");
    if (!fn_) throw std::invalid_argument("ObservationMap: rule must be callable");
  }

  int agent() const { return agent_; }
  int card_obs() const { return card_obs_; }
  const std::string& name() const { return name_; }

  int operator()(int interface, int priv) const { return fn_(interface, priv); }

  // Identity on the interface state (private state ignored).
  static ObservationMap identity(int agent, int card_interface) {
    return ObservationMap(agent, card_interface,
                          [](int m, int) { return m; }, "identity");
  }

  // Explicit table over interface states (private state ignored).
  static ObservationMap table(int agent, std::vector<int> tab, int card_obs) {
    for (int v : tab)
      if (v < 0 || v >= card_obs)
        throw std::invalid_argument("ObservationMap::table: entry out of range");
    return ObservationMap(
        agent, card_obs,
        [t = std::move(tab)](int m, int) {
          if (m < 0 || m >= static_cast<int>(t.size()))
            throw std::out_of_range("ObservationMap::table: interface id out of range");
          return t[m];
        },
        "table");
  }

 private:
  int agent_ = 0;
  int card_obs_ = 1;
  Fn fn_;
  std::string name_;
};

// Retention map: o = m mod n_bins with n_bins = ceil(rho * card_interface).
// rho = 1 is the identity; small rho coarsely aliases interface states.
inline ObservationMap make_retention_map(int agent, int card_interface, double rho) {
  if (card_interface < 1)
    throw std::invalid_argument("make_retention_map: card_interface must be >= 1");
  if (!(rho > 0.0) || rho > 1.0)
    throw std::invalid_argument("make_retention_map: rho must lie in (0, 1]");
  const int n_bins = static_cast<int>(std::ceil(rho * card_interface));
  return ObservationMap(agent, n_bins,
                        [n_bins](int m, int) { return m % n_bins; }, "retention");
}

}  // namespace icsmdp
