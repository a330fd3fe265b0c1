#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace icsmdp {

// Exact primitive kernel of an environment, factored at the step level into
// the two conditional one-step kernels an epoch is built from:
//   self_kernel[i][z]  transitions given the active agent i keeps control,
//   hand_kernel[i][z]  transitions given this step ends with a handoff,
// where z = latent * card_interface + interface indexes the joint
// latent-interface state.  Handoff timing itself is an independent
// Bernoulli(p_handoff) draw per step.  Rewards depend on the pre-step state,
// with an extra handoff_cost charged on handoff steps.
struct PrimitiveModel {
  int n_agents = 0;
  int card_latent = 0;
  int card_interface = 0;
  int horizon = 0;
  double discount = 0.0;
  double p_handoff = 1.0;
  double handoff_cost = 0.0;

  using SparseRow = std::vector<std::pair<int, double>>;  // (z', prob)

  std::vector<std::vector<SparseRow>> self_kernel;  // [agent][z]
  std::vector<std::vector<SparseRow>> hand_kernel;  // [agent][z]
  std::vector<double> reward;                       // [z], pre-step state reward
  std::vector<double> rho0_z;                       // initial distribution over z

  int n_z() const { return card_latent * card_interface; }
  int z_of(int latent, int interface) const { return latent * card_interface + interface; }
  int interface_of_z(int z) const { return z % card_interface; }
  int latent_of_z(int z) const { return z / card_interface; }
};

}  // namespace icsmdp
