#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "minesec/net.hpp"

namespace minesec {

struct NadamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Nesterov-momentum Adam (Dozat's rule with a constant momentum schedule).
class Nadam {
 public:
  Nadam() = default;

  explicit Nadam(const DenseNet& net, NadamConfig cfg = {})
      : cfg_(cfg), m_(net.zero_gradients()), v_(net.zero_gradients()), ready_(true) {
    if (!(cfg_.learning_rate > 0.0))
      throw std::invalid_argument("nadam: learning rate must be positive");
  }

  const NadamConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return t_; }

  // One descent step. Rejects non-finite gradients and guarantees the
  // parameters stay finite afterwards.
  void step(DenseNet& net, const DenseNet::Gradients& g) {
    if (!ready_) throw std::logic_error("nadam: optimizer not initialized");
    check_shapes(net, g);
    if (!g.finite())
      throw std::runtime_error("nadam: non-finite gradient, update rejected");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double c1_next = 1.0 - std::pow(cfg_.beta1, double(t_ + 1));
    const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));

    auto update = [&](double* p, const double* gr, double* m, double* v, std::size_t count) {
      for (std::size_t i = 0; i < count; ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gr[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gr[i] * gr[i];
        const double lookahead =
            cfg_.beta1 * m[i] / c1_next + (1.0 - cfg_.beta1) * gr[i] / c1;
        p[i] -= cfg_.learning_rate * lookahead / (std::sqrt(v[i] / c2) + cfg_.epsilon);
      }
    };

    if (net.has_embedding())
      update(net.embedding().data.data(), g.embedding.data.data(), m_.embedding.data.data(),
             v_.embedding.data.data(), g.embedding.size());
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      DenseNet::Layer& layer = net.layers()[l];
      update(layer.weight.data.data(), g.weights[l].data.data(), m_.weights[l].data.data(),
             v_.weights[l].data.data(), layer.weight.size());
      update(layer.bias.data(), g.biases[l].data(), m_.biases[l].data(), v_.biases[l].data(),
             layer.bias.size());
    }

    for (const DenseNet::Layer& layer : net.layers()) {
      if (!all_finite(layer.weight))
        throw std::runtime_error("nadam: parameters became non-finite");
      for (double b : layer.bias)
        if (!std::isfinite(b)) throw std::runtime_error("nadam: parameters became non-finite");
    }
    if (net.has_embedding() && !all_finite(net.embedding()))
      throw std::runtime_error("nadam: parameters became non-finite");
  }

 private:
  NadamConfig cfg_;
  DenseNet::Gradients m_, v_;
  std::uint64_t t_ = 0;
  bool ready_ = false;

  void check_shapes(const DenseNet& net, const DenseNet::Gradients& g) const {
    if (g.weights.size() != net.layers().size() || g.biases.size() != net.layers().size())
      throw std::invalid_argument("nadam: gradient layer count mismatch");
    if (g.embedding.size() != (net.has_embedding() ? net.embedding().size() : 0))
      throw std::invalid_argument("nadam: gradient embedding shape mismatch");
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      if (!g.weights[l].same_shape(net.layers()[l].weight) ||
          g.biases[l].size() != net.layers()[l].bias.size())
        throw std::invalid_argument("nadam: gradient shape mismatch at layer " +
                                    std::to_string(l));
    }
  }
};

}  // namespace minesec
