#pragma once

// Synthetic reaching benchmark: a 2-D mixture of four Gaussians with 4-step
// clockwise within-cluster dynamics, lifted to 100-dim Poisson rates through
// a fixed random affine-coupling flow. Ground-truth labels: cluster (content)
// and within-sequence step (style).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "swapvae/dataset.hpp"
#include "swapvae/errors.hpp"
#include "swapvae/matrix.hpp"
#include "swapvae/rng.hpp"

namespace swapvae {

namespace rng_tag {
inline constexpr uint64_t flow_params = 11;
inline constexpr uint64_t mixture = 12;
inline constexpr uint64_t emission = 13;
}  // namespace rng_tag

struct GaussianMixtureSpec {
  static constexpr int n_components = 4;
  std::array<double, 4> u{};  // component angle, u_i in [i*pi/2, (i+1)*pi/2]
  double variance_floor = 1e-3;

  std::array<double, 2> mean(int i) const {
    return {5.0 * std::sin(u[static_cast<size_t>(i)]),
            5.0 * std::cos(u[static_cast<size_t>(i)])};
  }
  std::array<double, 2> var(int i) const {
    const double s = std::abs(std::sin(u[static_cast<size_t>(i)]));
    return {std::max(0.6 - 0.3 * s, variance_floor),
            std::max(0.3 * s, variance_floor)};
  }
};

inline GaussianMixtureSpec sample_mixture_spec(Rng& rng, double variance_floor = 1e-3) {
  if (!(variance_floor > 0)) throw config_error("variance_floor must be > 0");
  GaussianMixtureSpec spec;
  spec.variance_floor = variance_floor;
  constexpr double half_pi = 1.5707963267948966;
  for (int i = 0; i < GaussianMixtureSpec::n_components; ++i)
    spec.u[static_cast<size_t>(i)] = rng.uniform_in(i * half_pi, (i + 1) * half_pi);
  return spec;
}

struct LatentSequence {
  Matrix points{4, 2};
  int cluster_id = 0;
  std::array<int, 4> y_s{0, 1, 2, 3};  // step label equals stored position
};

// Clockwise convention: sort points by decreasing atan2(second, first) about
// the origin; stable so exact ties keep draw order.
inline void order_clockwise(Matrix& pts) {
  require_shape(pts.rows == 4 && pts.cols == 2, "order_clockwise expects 4x2 points");
  std::array<size_t, 4> idx{0, 1, 2, 3};
  std::array<double, 4> ang{};
  for (size_t i = 0; i < 4; ++i) ang[i] = std::atan2(pts(i, 1), pts(i, 0));
  std::stable_sort(idx.begin(), idx.end(),
                   [&](size_t a, size_t b) { return ang[a] > ang[b]; });
  Matrix out(4, 2);
  for (size_t i = 0; i < 4; ++i) {
    out(i, 0) = pts(idx[i], 0);
    out(i, 1) = pts(idx[i], 1);
  }
  pts = out;
}

inline LatentSequence sample_sequence(const GaussianMixtureSpec& spec, int cluster_id,
                                      Rng& rng) {
  if (cluster_id < 0 || cluster_id >= GaussianMixtureSpec::n_components)
    throw config_error("cluster_id out of range");
  LatentSequence seq;
  seq.cluster_id = cluster_id;
  const auto m = spec.mean(cluster_id);
  const auto v = spec.var(cluster_id);
  for (size_t p = 0; p < 4; ++p) {
    seq.points(p, 0) = m[0] + std::sqrt(v[0]) * rng.normal();
    seq.points(p, 1) = m[1] + std::sqrt(v[1]) * rng.normal();
  }
  order_clockwise(seq.points);
  return seq;
}

struct CouplingBlock {
  Matrix w1{1, 1}, b1{1, 1};  // active-half -> hidden
  Matrix ws{1, 1}, bs{1, 1};  // hidden -> log-scale (bounded by 0.5*tanh)
  Matrix wt{1, 1}, bt{1, 1};  // hidden -> shift
};

// Fixed (never trained) invertible emitter. Coupling blocks alternate which
// half of the 100-dim lifted vector is updated; rates come from an
// elementwise softplus of rate_gain * v + rate_offset.
struct FlowGenerator {
  static constexpr size_t lift_dim = 100;
  static constexpr size_t half = 50;
  static constexpr size_t hidden = 64;
  uint64_t seed = 0;
  int n_coupling_blocks = 4;
  double rate_gain = 1.0;
  double rate_offset = 0.0;
  std::vector<double> pad;  // fixed 98-dim lift of the 2-D latent
  std::vector<CouplingBlock> blocks;
};

inline FlowGenerator make_flow_generator(uint64_t seed, int n_coupling_blocks = 4,
                                         double rate_gain = 32.0,
                                         double rate_offset = 12.0) {
  if (n_coupling_blocks < 1) throw config_error("need at least one coupling block");
  if (!(rate_gain > 0)) throw config_error("rate_gain must be > 0");
  FlowGenerator gen;
  gen.seed = seed;
  gen.n_coupling_blocks = n_coupling_blocks;
  gen.rate_gain = rate_gain;
  gen.rate_offset = rate_offset;
  Rng rng = Rng::derive(seed, rng_tag::flow_params, 0);
  gen.pad.resize(FlowGenerator::lift_dim - 2);
  for (double& v : gen.pad) v = rng.normal();
  const auto h = FlowGenerator::hidden;
  const auto hf = FlowGenerator::half;
  for (int b = 0; b < n_coupling_blocks; ++b) {
    CouplingBlock blk;
    blk.w1 = Matrix(h, hf);
    for (double& v : blk.w1.data) v = rng.normal() / std::sqrt(double(hf));
    blk.b1 = Matrix(1, h);
    for (double& v : blk.b1.data) v = 0.1 * rng.normal();
    blk.ws = Matrix(hf, h);
    for (double& v : blk.ws.data) v = rng.normal() / std::sqrt(double(h));
    blk.bs = Matrix(1, hf);
    for (double& v : blk.bs.data) v = 0.1 * rng.normal();
    blk.wt = Matrix(hf, h);
    for (double& v : blk.wt.data) v = rng.normal() / std::sqrt(double(h));
    blk.bt = Matrix(1, hf);
    for (double& v : blk.bt.data) v = 0.1 * rng.normal();
    gen.blocks.push_back(std::move(blk));
  }
  return gen;
}

namespace detail {
// Scale s and shift t of one block as functions of the active half (n x 50).
inline void coupling_scale_shift(const CouplingBlock& blk, const Matrix& active,
                                 Matrix& s, Matrix& t) {
  Matrix h = matmul_nt(active, blk.w1);
  for (size_t i = 0; i < h.rows; ++i)
    for (size_t j = 0; j < h.cols; ++j) h(i, j) = std::tanh(h(i, j) + blk.b1(0, j));
  s = matmul_nt(h, blk.ws);
  for (size_t i = 0; i < s.rows; ++i)
    for (size_t j = 0; j < s.cols; ++j) s(i, j) = 0.5 * std::tanh(s(i, j) + blk.bs(0, j));
  t = matmul_nt(h, blk.wt);
  for (size_t i = 0; i < t.rows; ++i)
    for (size_t j = 0; j < t.cols; ++j) t(i, j) += blk.bt(0, j);
}

inline void split_halves(const Matrix& v, bool even_block, Matrix& active, Matrix& passive) {
  const size_t hf = FlowGenerator::half;
  active = Matrix(v.rows, hf);
  passive = Matrix(v.rows, hf);
  const size_t a0 = even_block ? 0 : hf;
  const size_t p0 = even_block ? hf : 0;
  for (size_t i = 0; i < v.rows; ++i)
    for (size_t j = 0; j < hf; ++j) {
      active(i, j) = v(i, a0 + j);
      passive(i, j) = v(i, p0 + j);
    }
}

inline void store_passive(Matrix& v, bool even_block, const Matrix& passive) {
  const size_t hf = FlowGenerator::half;
  const size_t p0 = even_block ? hf : 0;
  for (size_t i = 0; i < v.rows; ++i)
    for (size_t j = 0; j < hf; ++j) v(i, p0 + j) = passive(i, j);
}
}  // namespace detail

// Coupling stage only (no lift, no softplus); rows are independent samples.
inline Matrix flow_coupling(const FlowGenerator& gen, Matrix v) {
  require_shape(v.cols == FlowGenerator::lift_dim, "flow_coupling expects 100 columns");
  Matrix active(1, 1), passive(1, 1), s(1, 1), t(1, 1);
  for (int b = 0; b < gen.n_coupling_blocks; ++b) {
    const bool even = (b % 2 == 0);
    detail::split_halves(v, even, active, passive);
    detail::coupling_scale_shift(gen.blocks[static_cast<size_t>(b)], active, s, t);
    for (size_t i = 0; i < passive.rows; ++i)
      for (size_t j = 0; j < passive.cols; ++j)
        passive(i, j) = passive(i, j) * std::exp(s(i, j)) + t(i, j);
    detail::store_passive(v, even, passive);
  }
  for (double x : v.data)
    if (!std::isfinite(x)) throw numeric_error("generator overflow in coupling stage");
  return v;
}

// Exact inverse of flow_coupling.
inline Matrix flow_invert(const FlowGenerator& gen, Matrix v) {
  require_shape(v.cols == FlowGenerator::lift_dim, "flow_invert expects 100 columns");
  Matrix active(1, 1), passive(1, 1), s(1, 1), t(1, 1);
  for (int b = gen.n_coupling_blocks - 1; b >= 0; --b) {
    const bool even = (b % 2 == 0);
    detail::split_halves(v, even, active, passive);
    detail::coupling_scale_shift(gen.blocks[static_cast<size_t>(b)], active, s, t);
    for (size_t i = 0; i < passive.rows; ++i)
      for (size_t j = 0; j < passive.cols; ++j)
        passive(i, j) = (passive(i, j) - t(i, j)) * std::exp(-s(i, j));
    detail::store_passive(v, even, passive);
  }
  for (double x : v.data)
    if (!std::isfinite(x)) throw numeric_error("generator overflow in inverse coupling");
  return v;
}

// Lift a batch of 2-D latents with the fixed pad, couple, and map to rates.
inline Matrix flow_forward(const FlowGenerator& gen, const Matrix& z2) {
  require_shape(z2.cols == 2, "flow_forward expects 2-D latents");
  Matrix v(z2.rows, FlowGenerator::lift_dim);
  for (size_t i = 0; i < z2.rows; ++i) {
    v(i, 0) = z2(i, 0);
    v(i, 1) = z2(i, 1);
    for (size_t j = 0; j < gen.pad.size(); ++j) v(i, 2 + j) = gen.pad[j];
  }
  v = flow_coupling(gen, std::move(v));
  for (double& x : v.data) {
    const double pre = gen.rate_gain * x + gen.rate_offset;
    x = pre > 20.0 ? pre : std::log1p(std::exp(pre));
    if (!(x > 0.0) || !std::isfinite(x))
      throw numeric_error("generator overflow in rate map");
  }
  return v;
}

inline Matrix flow_forward(const FlowGenerator& gen, const std::array<double, 2>& z) {
  Matrix m(1, 2);
  m(0, 0) = z[0];
  m(0, 1) = z[1];
  return flow_forward(gen, m);
}

struct SyntheticDataset {
  BinnedDataset ds;    // counts + labels; y_dir = cluster, y_time = step
  Matrix rates{1, 1};  // ground-truth Poisson rates per row
  Matrix latents{1, 1};  // ground-truth 2-D points per row (stored order)
  SplitIndex split;
};

inline SyntheticDataset generate_dataset(const GaussianMixtureSpec& spec,
                                         const FlowGenerator& gen, size_t n_sequences,
                                         Rng& rng) {
  if (n_sequences < 1) throw config_error("n_sequences must be >= 1");
  const size_t n_rows = 4 * n_sequences;
  SyntheticDataset out;
  out.latents = Matrix(n_rows, 2);
  out.ds.X = Matrix(n_rows, FlowGenerator::lift_dim);
  out.ds.l = GaussianMixtureSpec::n_components;
  out.ds.bin_width_ms = 100.0;
  for (size_t sq = 0; sq < n_sequences; ++sq) {
    const int cluster = static_cast<int>(sq % 4);  // balanced cluster sampling
    LatentSequence seq = sample_sequence(spec, cluster, rng);
    for (size_t p = 0; p < 4; ++p) {
      const size_t row = 4 * sq + p;
      out.latents(row, 0) = seq.points(p, 0);
      out.latents(row, 1) = seq.points(p, 1);
      out.ds.y_dir.push_back(cluster);
      out.ds.y_time.push_back(static_cast<int>(p));
      out.ds.trial_id.push_back(static_cast<int64_t>(sq));
    }
  }
  out.rates = flow_forward(gen, out.latents);
  for (size_t i = 0; i < n_rows; ++i)
    for (size_t j = 0; j < FlowGenerator::lift_dim; ++j)
      out.ds.X(i, j) = double(rng.poisson(out.rates(i, j)));
  out.split = train_test_split(n_rows, 0.8, rng);
  out.ds.validate();
  return out;
}

}  // namespace swapvae
