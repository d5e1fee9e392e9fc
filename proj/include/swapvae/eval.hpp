#pragma once

// Evaluation of frozen representations: linear probes with circular accuracy
// windows for direction and a softmax probe for time, the per-dimension
// label-specificity (disentanglement) score, and reconstruction RMSE against
// condition-averaged counts. Nothing in here mutates the representation.

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "swapvae/adam.hpp"
#include "swapvae/dataset.hpp"
#include "swapvae/layers.hpp"
#include "swapvae/losses.hpp"
#include "swapvae/matrix.hpp"
#include "swapvae/rng.hpp"

namespace swapvae {

struct ProbeConfig {
  double lr = 0.005;
  double weight_decay = 1e-5;
  size_t epochs = 500;  // full-batch steps
  uint64_t seed = 0;
};

struct DecodingReport {
  double acc = 0.0;        // percent
  double delta_acc = 0.0;  // percent, widened window; always >= acc
  double time_acc = 0.0;   // percent
  std::string space;       // full | content | style
  size_t n_test = 0;
};

struct DisentanglementReport {
  std::vector<double> per_dim_scores;  // each in [0, 1]
  double overall = 0.0;
  size_t dropped_cells = 0;  // empty (y_c, y_s) combinations skipped
};

// Wrapped angular distance to the class center 2*pi*c/l; a hit is distance
// <= pi/l (acc) or <= 1.5*pi/l (delta-acc), closed intervals so exact
// boundary ties count.
inline bool circular_acc(double pred_angle, int true_class, int l, bool widen) {
  const double center = 2.0 * std::numbers::pi * double(true_class) / double(l);
  double diff = std::fmod(pred_angle - center, 2.0 * std::numbers::pi);
  if (diff > std::numbers::pi) diff -= 2.0 * std::numbers::pi;
  if (diff < -std::numbers::pi) diff += 2.0 * std::numbers::pi;
  const double window = (widen ? 1.5 : 1.0) * std::numbers::pi / double(l);
  return std::abs(diff) <= window;
}

struct DirectionProbe {
  Linear lin;  // k -> 2, trained to regress (cos theta_c, sin theta_c)
  bool degenerate_features = false;

  std::vector<double> angles(const Matrix& features) const {
    Matrix out = lin.forward(features);
    std::vector<double> a(out.rows);
    for (size_t i = 0; i < out.rows; ++i) a[i] = std::atan2(out(i, 1), out(i, 0));
    return a;
  }
};

namespace detail {
inline bool all_columns_constant(const Matrix& f) {
  for (size_t j = 0; j < f.cols; ++j)
    for (size_t i = 1; i < f.rows; ++i)
      if (f(i, j) != f(0, j)) return false;
  return true;
}
}  // namespace detail

// Full-batch Adam with decoupled weight decay on a single linear layer;
// squared error to the unit-circle class embedding, summed over the two
// outputs and averaged over rows.
inline DirectionProbe fit_direction_probe(const Matrix& features, const std::vector<int>& y_dir,
                                          int l, const ProbeConfig& cfg) {
  require_shape(features.rows == y_dir.size(), "probe features vs labels");
  if (features.rows == 0) throw data_error("cannot fit probe on empty features");
  if (l < 2) throw config_error("direction probe needs l >= 2");
  for (int y : y_dir)
    if (y < 0 || y >= l) throw data_error("direction label out of range");

  DirectionProbe probe;
  probe.lin = Linear("probe.dir", features.cols, 2);
  Rng rng(cfg.seed);
  probe.lin.init(rng);
  probe.degenerate_features = detail::all_columns_constant(features);

  Matrix target(features.rows, 2);
  for (size_t i = 0; i < features.rows; ++i) {
    const double th = 2.0 * std::numbers::pi * double(y_dir[i]) / double(l);
    target(i, 0) = std::cos(th);
    target(i, 1) = std::sin(th);
  }

  Adam opt(probe.lin.params(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  const double inv_n = 1.0 / double(features.rows);
  for (size_t e = 0; e < cfg.epochs; ++e) {
    Linear::Ctx ctx;
    Matrix out = probe.lin.forward(features, &ctx);
    Matrix dout(out.rows, 2);
    for (size_t i = 0; i < out.data.size(); ++i)
      dout.data[i] = 2.0 * (out.data[i] - target.data[i]) * inv_n;
    zero_grads(probe.lin.params());
    probe.lin.backward(ctx, dout);
    opt.step();
  }
  return probe;
}

// acc / delta-acc percentages of a fitted probe on held-out features.
inline std::pair<double, double> direction_accuracy(const DirectionProbe& probe,
                                                    const Matrix& features,
                                                    const std::vector<int>& y_dir, int l) {
  require_shape(features.rows == y_dir.size(), "probe eval features vs labels");
  if (features.rows == 0) throw data_error("empty evaluation set");
  const std::vector<double> ang = probe.angles(features);
  size_t hits = 0, wide_hits = 0;
  for (size_t i = 0; i < ang.size(); ++i) {
    if (circular_acc(ang[i], y_dir[i], l, false)) ++hits;
    if (circular_acc(ang[i], y_dir[i], l, true)) ++wide_hits;
  }
  const double n = double(ang.size());
  return {100.0 * double(hits) / n, 100.0 * double(wide_hits) / n};
}

struct TimeProbe {
  Linear lin;  // k -> T softmax classifier
  bool degenerate_features = false;
};

inline TimeProbe fit_time_probe(const Matrix& features, const std::vector<int>& y_time, int t_span,
                                const ProbeConfig& cfg) {
  require_shape(features.rows == y_time.size(), "probe features vs labels");
  if (features.rows == 0) throw data_error("cannot fit probe on empty features");
  if (t_span < 2) throw config_error("time probe needs T >= 2");
  std::vector<int64_t> y(y_time.size());
  for (size_t i = 0; i < y.size(); ++i) {
    if (y_time[i] < 0 || y_time[i] >= t_span) throw data_error("time label out of range");
    y[i] = y_time[i];
  }

  TimeProbe probe;
  probe.lin = Linear("probe.time", features.cols, static_cast<size_t>(t_span));
  Rng rng(cfg.seed);
  probe.lin.init(rng);
  probe.degenerate_features = detail::all_columns_constant(features);

  Adam opt(probe.lin.params(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  for (size_t e = 0; e < cfg.epochs; ++e) {
    Linear::Ctx ctx;
    Matrix logits = probe.lin.forward(features, &ctx);
    Matrix dlogits;
    softmax_cross_entropy(logits, y, &dlogits);
    zero_grads(probe.lin.params());
    probe.lin.backward(ctx, dlogits);
    opt.step();
  }
  return probe;
}

inline double time_accuracy(const TimeProbe& probe, const Matrix& features,
                            const std::vector<int>& y_time) {
  require_shape(features.rows == y_time.size(), "probe eval features vs labels");
  if (features.rows == 0) throw data_error("empty evaluation set");
  Matrix logits = probe.lin.forward(features);
  size_t hits = 0;
  for (size_t i = 0; i < logits.rows; ++i) {
    size_t arg = 0;
    for (size_t j = 1; j < logits.cols; ++j)
      if (logits(i, j) > logits(i, arg)) arg = j;
    if (static_cast<int>(arg) == y_time[i]) ++hits;
  }
  return 100.0 * double(hits) / double(logits.rows);
}

// Fits both probes on train features and reports held-out accuracies.
inline DecodingReport decode_report(const Matrix& f_train, const Matrix& f_test,
                                    const std::vector<int>& dir_train,
                                    const std::vector<int>& dir_test,
                                    const std::vector<int>& time_train,
                                    const std::vector<int>& time_test, int l, int t_span,
                                    const ProbeConfig& cfg, const std::string& space) {
  DecodingReport rep;
  rep.space = space;
  rep.n_test = f_test.rows;
  DirectionProbe dp = fit_direction_probe(f_train, dir_train, l, cfg);
  auto [acc, dacc] = direction_accuracy(dp, f_test, dir_test, l);
  rep.acc = acc;
  rep.delta_acc = dacc;
  TimeProbe tp = fit_time_probe(f_train, time_train, t_span, cfg);
  rep.time_acc = time_accuracy(tp, f_test, time_test);
  return rep;
}

// Per-dimension specificity: with cell means m[c, s] of one feature over rows
// labeled (y_c = c, y_s = s), V_c averages over s the population variance of
// m across c, V_s symmetrically, and the dimension scores
// |V_c - V_s| / (V_c + V_s + 1e-12). Empty cells are dropped (counted in the
// report); ties between present cells use population variance over what
// remains. Invariant to per-dimension affine rescaling and to row order.
inline DisentanglementReport disentanglement_score(const Matrix& z, const std::vector<int>& y_c,
                                                   const std::vector<int>& y_s) {
  require_shape(z.rows == y_c.size() && z.rows == y_s.size(), "score features vs labels");
  std::map<int, size_t> cmap, smap;
  for (int v : y_c) cmap.emplace(v, 0);
  for (int v : y_s) smap.emplace(v, 0);
  if (cmap.size() < 2 || smap.size() < 2)
    throw data_error("disentanglement score needs >= 2 distinct values of each label");
  size_t idx = 0;
  for (auto& [k, v] : cmap) v = idx++;
  idx = 0;
  for (auto& [k, v] : smap) v = idx++;
  const size_t nc = cmap.size(), ns = smap.size(), k = z.cols;

  std::vector<size_t> count(nc * ns, 0);
  std::vector<std::vector<double>> sum(nc * ns, std::vector<double>(k, 0.0));
  for (size_t i = 0; i < z.rows; ++i) {
    const size_t cell = cmap[y_c[i]] * ns + smap[y_s[i]];
    ++count[cell];
    for (size_t j = 0; j < k; ++j) sum[cell][j] += z(i, j);
  }

  DisentanglementReport rep;
  for (size_t cell = 0; cell < nc * ns; ++cell)
    if (count[cell] == 0) ++rep.dropped_cells;

  auto pop_var = [](const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= double(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return var / double(v.size());
  };

  rep.per_dim_scores.resize(k);
  for (size_t j = 0; j < k; ++j) {
    double vc = 0.0;
    size_t vc_terms = 0;
    for (size_t s = 0; s < ns; ++s) {
      std::vector<double> means;
      for (size_t c = 0; c < nc; ++c)
        if (count[c * ns + s] > 0) means.push_back(sum[c * ns + s][j] / double(count[c * ns + s]));
      if (!means.empty()) {
        vc += pop_var(means);
        ++vc_terms;
      }
    }
    vc /= double(vc_terms);
    double vs = 0.0;
    size_t vs_terms = 0;
    for (size_t c = 0; c < nc; ++c) {
      std::vector<double> means;
      for (size_t s = 0; s < ns; ++s)
        if (count[c * ns + s] > 0) means.push_back(sum[c * ns + s][j] / double(count[c * ns + s]));
      if (!means.empty()) {
        vs += pop_var(means);
        ++vs_terms;
      }
    }
    vs /= double(vs_terms);
    rep.per_dim_scores[j] = std::abs(vc - vs) / (vc + vs + 1e-12);
    rep.overall += rep.per_dim_scores[j];
  }
  rep.overall /= double(k);
  return rep;
}

struct RmseReport {
  std::vector<double> by_direction;  // one RMSE per neuron across direction conditions
  std::vector<double> by_time;       // one RMSE per neuron across time conditions
  size_t dropped_conditions = 0;
};

namespace detail {
// Groups rows by label, means both matrices per group, returns per-column
// RMSE between the two sets of group means.
inline std::vector<double> psth_rmse(const Matrix& recon, const Matrix& counts,
                                     const std::vector<int>& labels,
                                     const std::vector<size_t>& rows, size_t* dropped) {
  std::map<int, std::vector<size_t>> groups;
  for (size_t r : rows) groups[labels[r]].push_back(r);
  const size_t d = counts.cols;
  std::vector<double> sq(d, 0.0);
  size_t used = 0;
  for (auto& [label, members] : groups) {
    if (members.empty()) {
      ++*dropped;
      continue;
    }
    ++used;
    for (size_t j = 0; j < d; ++j) {
      double pm = 0.0, rm = 0.0;
      for (size_t r : members) {
        pm += counts(r, j);
        rm += recon(r, j);
      }
      pm /= double(members.size());
      rm /= double(members.size());
      sq[j] += (rm - pm) * (rm - pm);
    }
  }
  if (used == 0) throw data_error("no nonempty conditions for RMSE");
  for (double& v : sq) v = std::sqrt(v / double(used));
  return sq;
}
}  // namespace detail

// Reconstruction fidelity against condition-averaged counts on the given rows
// (the held-out split): PSTH per direction and per time marginal, RMSE per
// neuron between model reconstruction means and the empirical means.
inline RmseReport rmse_rates(const Matrix& recon, const BinnedDataset& ds,
                             const std::vector<size_t>& rows) {
  require_shape(recon.rows == ds.n() && recon.cols == ds.d(), "reconstruction shape");
  if (rows.empty()) throw data_error("rmse_rates needs a nonempty row set");
  RmseReport rep;
  rep.by_direction = detail::psth_rmse(recon, ds.X, ds.y_dir, rows, &rep.dropped_conditions);
  rep.by_time = detail::psth_rmse(recon, ds.X, ds.y_time, rows, &rep.dropped_conditions);
  return rep;
}

}  // namespace swapvae
