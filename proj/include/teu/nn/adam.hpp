#pragma once

#include <cmath>
#include <vector>

#include "teu/nn/tensor.hpp"

namespace teu::nn {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const ParameterStore& store, AdamConfig cfg = {}) : cfg_(cfg), m_(store.zeros_like()), v_(store.zeros_like()) {}

  void step(ParameterStore& store, const std::vector<Tensor>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < store.size(); ++p) {
      auto& w = store.value(p).data;
      const auto& g = grads[p].data;
      auto& m = m_[p].data;
      auto& v = v_[p].data;
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        w[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
      }
    }
  }

  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

}  // namespace teu::nn
