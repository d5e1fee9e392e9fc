#pragma once

// Central-difference verification of analytic gradients. The loss closure must
// recompute the loss and overwrite Param::grad on every call, and must be
// deterministic: any sampling noise (augmentation draws, reparameterization
// epsilon) has to be frozen into the closure before checking.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "swapvae/layers.hpp"
#include "swapvae/rng.hpp"

namespace swapvae {

struct GradCheckConfig {
  double tol = 1e-4;   // relative error threshold
  double step = 1e-5;  // central difference h
  // 0 checks every coordinate; otherwise at most this many per parameter,
  // sampled without replacement from the given seed.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckOffender {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  std::size_t coords_checked = 0;
  double max_rel_err = 0.0;
  std::vector<GradCheckOffender> offenders;

  bool pass() const { return offenders.empty(); }
};

// relative error |a - n| / max(1, |a|, |n|); the 1 floors the scale so
// near-zero gradients are compared absolutely.
inline double grad_rel_err(double analytic, double numeric) {
  const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / scale;
}

inline GradCheckReport grad_check(const std::function<double()>& loss_and_grad,
                                  const std::vector<Param*>& params,
                                  const GradCheckConfig& cfg = {}) {
  GradCheckReport report;
  loss_and_grad();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad.data);

  Rng rng(cfg.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    std::vector<std::size_t> coords(p.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (cfg.max_coords_per_param > 0 && coords.size() > cfg.max_coords_per_param) {
      rng.shuffle(coords);
      coords.resize(cfg.max_coords_per_param);
    }
    for (std::size_t i : coords) {
      const double saved = p.value.data[i];
      p.value.data[i] = saved + cfg.step;
      const double up = loss_and_grad();
      p.value.data[i] = saved - cfg.step;
      const double down = loss_and_grad();
      p.value.data[i] = saved;
      const double numeric = (up - down) / (2.0 * cfg.step);
      const double rel = grad_rel_err(analytic[pi][i], numeric);
      report.coords_checked++;
      report.max_rel_err = std::max(report.max_rel_err, rel);
      if (rel >= cfg.tol)
        report.offenders.push_back({p.name, i, analytic[pi][i], numeric, rel});
    }
  }
  // restore the analytic gradients for the caller
  loss_and_grad();
  return report;
}

}  // namespace swapvae
