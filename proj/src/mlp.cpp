#include "icsmdp/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace icsmdp {

Mlp::Mlp(const std::vector<int>& widths, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("Mlp: widths must be positive");
  layers_.resize(widths.size() - 1);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Layer& layer = layers_[l];
    layer.in = widths[l];
    layer.out = widths[l + 1];
    layer.w.resize(static_cast<std::size_t>(layer.out) * layer.in);
    layer.b.assign(layer.out, 0.0);
    const double amp = 1.0 / std::sqrt(static_cast<double>(layer.in));
    for (double& v : layer.w) v = rng.uniform(-amp, amp);
  }
}

void Mlp::forward_cached(const std::vector<double>& x,
                         std::vector<std::vector<double>>& post) const {
  if (static_cast<int>(x.size()) != input_dim()) {
    throw std::invalid_argument("Mlp: input dimension mismatch");
  }
  post.assign(layers_.size(), {});
  const std::vector<double>* cur = &x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    auto& out = post[l];
    out.assign(layer.out, 0.0);
    for (int j = 0; j < layer.out; ++j) {
      double acc = layer.b[j];
      const double* row = layer.w.data() + static_cast<std::size_t>(j) * layer.in;
      for (int i = 0; i < layer.in; ++i) acc += row[i] * (*cur)[i];
      const bool hidden = l + 1 < layers_.size();
      out[j] = hidden ? std::max(0.0, acc) : acc;
    }
    cur = &out;
  }
}

std::vector<double> Mlp::forward(const std::vector<double>& x) const {
  std::vector<std::vector<double>> post;
  forward_cached(x, post);
  return post.back();
}

double Mlp::loss(const std::vector<double>& x, int head, double target) const {
  const double r = forward(x)[head] - target;
  return 0.5 * r * r;
}

std::vector<Mlp::Layer> Mlp::gradients(const std::vector<double>& x, int head,
                                       double target) const {
  std::vector<std::vector<double>> post;
  forward_cached(x, post);

  std::vector<Layer> grads(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    grads[l].in = layers_[l].in;
    grads[l].out = layers_[l].out;
    grads[l].w.assign(layers_[l].w.size(), 0.0);
    grads[l].b.assign(layers_[l].b.size(), 0.0);
  }

  // Backpropagate d(0.5 (q - y)^2).  Only the chosen head carries error.
  std::vector<double> delta(layers_.back().out, 0.0);
  delta[head] = post.back()[head] - target;
  for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
    const Layer& layer = layers_[l];
    const std::vector<double>& input = l == 0 ? x : post[l - 1];
    Layer& grad = grads[l];
    for (int j = 0; j < layer.out; ++j) {
      const double d = delta[j];
      if (d == 0.0) continue;
      grad.b[j] = d;
      double* grow = grad.w.data() + static_cast<std::size_t>(j) * layer.in;
      for (int i = 0; i < layer.in; ++i) grow[i] = d * input[i];
    }
    if (l == 0) break;
    std::vector<double> prev(layer.in, 0.0);
    for (int j = 0; j < layer.out; ++j) {
      const double d = delta[j];
      if (d == 0.0) continue;
      const double* row = layer.w.data() + static_cast<std::size_t>(j) * layer.in;
      for (int i = 0; i < layer.in; ++i) prev[i] += d * row[i];
    }
    // Rectifier gate: zero where the previous layer's output was clamped.
    for (int i = 0; i < layer.in; ++i) {
      if (post[l - 1][i] <= 0.0) prev[i] = 0.0;
    }
    delta.swap(prev);
  }
  return grads;
}

void Mlp::sgd_step(const std::vector<double>& x, int head, double target,
                   double learning_rate, double grad_clip) {
  auto grads = gradients(x, head, target);
  if (grad_clip > 0.0) {
    double norm_sq = 0.0;
    for (const auto& g : grads) {
      for (double v : g.w) norm_sq += v * v;
      for (double v : g.b) norm_sq += v * v;
    }
    const double norm = std::sqrt(norm_sq);
    if (norm > grad_clip) {
      const double scale = grad_clip / norm;
      for (auto& g : grads) {
        for (double& v : g.w) v *= scale;
        for (double& v : g.b) v *= scale;
      }
    }
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (std::size_t k = 0; k < layers_[l].w.size(); ++k) {
      layers_[l].w[k] -= learning_rate * grads[l].w[k];
    }
    for (std::size_t k = 0; k < layers_[l].b.size(); ++k) {
      layers_[l].b[k] -= learning_rate * grads[l].b[k];
    }
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.w.size() + layer.b.size();
  return n;
}

nlohmann::json Mlp::checkpoint() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : layers_) {
    layers.push_back({{"in", layer.in}, {"out", layer.out}, {"w", layer.w}, {"b", layer.b}});
  }
  return {{"layers", layers}};
}

void Mlp::restore(const nlohmann::json& blob) {
  const auto& layers = blob.at("layers");
  if (layers.size() != layers_.size()) {
    throw std::runtime_error("Mlp::restore: layer count mismatch");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Layer& layer = layers_[l];
    if (layers[l].at("in").get<int>() != layer.in ||
        layers[l].at("out").get<int>() != layer.out) {
      throw std::runtime_error("Mlp::restore: layer shape mismatch");
    }
    layers[l].at("w").get_to(layer.w);
    layers[l].at("b").get_to(layer.b);
  }
}

}  // namespace icsmdp
