#pragma once

// Adam with bias correction and decoupled weight decay. The decay is applied
// as lr * weight_decay * param on the pre-step value, after the moment-based
// update (the AdamW convention), so decay never enters the moment estimates.

#include <cmath>
#include <cstdint>
#include <vector>

#include "swapvae/layers.hpp"

namespace swapvae {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Param*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (Param* p : params_) {
      m_.emplace_back(p->value.rows, p->value.cols);
      v_.emplace_back(p->value.rows, p->value.cols);
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      Param& p = *params_[pi];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = p.grad.data[i];
        if (!std::isfinite(g))
          throw numeric_error("non-finite gradient in parameter " + p.name);
        double& m = m_[pi].data[i];
        double& v = v_[pi].data[i];
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        const double prev = p.value.data[i];
        p.value.data[i] = prev - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps) -
                          cfg_.lr * cfg_.weight_decay * prev;
      }
    }
  }

  std::uint64_t t() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  // Optimizer state exposure for checkpointing; moments are stored per
  // parameter in registration order.
  std::vector<Matrix>& moments_m() { return m_; }
  std::vector<Matrix>& moments_v() { return v_; }
  void set_t(std::uint64_t t) { t_ = t; }

 private:
  std::vector<Param*> params_;
  std::vector<Matrix> m_, v_;
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
};

}  // namespace swapvae
