#pragma once

#include <cstdint>
#include <vector>

#include "icsmdp/rng.hpp"

#include "json.hpp"

namespace icsmdp {

// Minimal fully connected network: rectifier hidden layers, linear output,
// plain SGD on one sample at a time.  Initialization is centered uniform with
// amplitude 1/sqrt(fan_in).  Gradients are clipped in global norm before each
// step as a stand-in for a projection onto a parameter ball.
class Mlp {
 public:
  struct Layer {
    int in = 0;
    int out = 0;
    std::vector<double> w;  // row-major [out][in]
    std::vector<double> b;  // [out]
  };

  // widths = {input, hidden..., output}
  Mlp(const std::vector<int>& widths, Rng& rng);

  int input_dim() const { return layers_.front().in; }
  int output_dim() const { return layers_.back().out; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  std::vector<double> forward(const std::vector<double>& x) const;

  // Half-squared loss of one output head against a scalar target.
  double loss(const std::vector<double>& x, int head, double target) const;

  // Gradient of the half-squared loss at one sample; layout parallels layers().
  std::vector<Layer> gradients(const std::vector<double>& x, int head,
                               double target) const;

  // One SGD step on the half-squared loss; the gradient is clipped to
  // grad_clip in global L2 norm first (0 disables clipping).
  void sgd_step(const std::vector<double>& x, int head, double target,
                double learning_rate, double grad_clip);

  std::size_t parameter_count() const;
  nlohmann::json checkpoint() const;
  void restore(const nlohmann::json& blob);

 private:
  // Forward pass keeping pre- and post-activation values per layer.
  void forward_cached(const std::vector<double>& x,
                      std::vector<std::vector<double>>& post) const;

  std::vector<Layer> layers_;
};

}  // namespace icsmdp
