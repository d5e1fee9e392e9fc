#pragma once

// Dense layer zoo with hand-derived backward passes: linear, batch
// normalization, ReLU, and thresholded softplus. Each forward fills a Ctx
// holding exactly what its backward needs, so one layer instance can serve
// several forward calls per step (the decoder runs twice per training
// iteration). Backward calls accumulate into Param::grad.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "swapvae/matrix.hpp"
#include "swapvae/rng.hpp"

namespace swapvae {

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string n, std::size_t rows, std::size_t cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols) {}

  std::size_t size() const { return value.size(); }
  void zero_grad() { grad.fill(0.0); }
};

inline void zero_grads(const std::vector<Param*>& params) {
  for (Param* p : params) p->zero_grad();
}

// Glorot uniform in +-sqrt(6 / (fan_in + fan_out)), drawn in row-major order.
inline void glorot_init(Param& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : w.value.data) v = rng.uniform_in(-limit, limit);
}

struct Linear {
  std::size_t in = 0;
  std::size_t out = 0;
  Param weight;  // out x in
  Param bias;    // 1 x out

  Linear() = default;
  Linear(std::string name, std::size_t in_width, std::size_t out_width)
      : in(in_width),
        out(out_width),
        weight(name + ".weight", out_width, in_width),
        bias(name + ".bias", 1, out_width) {}

  void init(Rng& rng) {
    glorot_init(weight, in, out, rng);
    bias.value.fill(0.0);
  }

  struct Ctx {
    Matrix x;
  };

  // y = x W^T + b, rows are samples. Accepts the input by value so callers
  // threading activations through a layer chain can move them into the ctx.
  Matrix forward(Matrix x, Ctx* ctx = nullptr) const {
    require_shape(x.cols == in, "linear input width");
    Matrix y = matmul_nt(x, weight.value);
    for (std::size_t i = 0; i < y.rows; ++i)
      for (std::size_t j = 0; j < out; ++j) y(i, j) += bias.value.data[j];
    if (ctx) ctx->x = std::move(x);
    return y;
  }

  // grad_weight += dy^T x; grad_bias += column sums of dy; returns dx = dy W.
  Matrix backward(const Ctx& ctx, const Matrix& dy) {
    require_shape(dy.cols == out && dy.rows == ctx.x.rows, "linear upstream gradient");
    gemm(true, false, 1.0, dy, ctx.x, 1.0, weight.grad);
    for (std::size_t i = 0; i < dy.rows; ++i)
      for (std::size_t j = 0; j < out; ++j) bias.grad.data[j] += dy(i, j);
    return matmul(dy, weight.value);
  }

  std::vector<Param*> params() { return {&weight, &bias}; }
};

struct BatchNorm {
  std::size_t width = 0;
  double eps = 5e-5;
  double momentum = 0.1;
  Param gamma;  // 1 x width
  Param beta;   // 1 x width
  Matrix running_mean;  // 1 x width, checkpointed alongside parameters
  Matrix running_var;   // 1 x width

  BatchNorm() = default;
  BatchNorm(std::string name, std::size_t w)
      : width(w),
        gamma(name + ".gamma", 1, w),
        beta(name + ".beta", 1, w),
        running_mean(1, w, 0.0),
        running_var(1, w, 1.0) {
    gamma.value.fill(1.0);
  }

  struct Ctx {
    Matrix xhat;
    std::vector<double> inv_std;
    bool train = true;
  };

  // Train mode standardizes by batch statistics (biased variance) and updates
  // the running buffers with momentum; the running variance uses the unbiased
  // estimate, matching the convention the architecture was specified against.
  // Eval mode standardizes by the running buffers and touches nothing. The
  // input arrives by value and is transformed in place after the statistics
  // passes, so moved-in activations cost no extra allocation.
  Matrix forward(Matrix x, bool train, Ctx* ctx = nullptr) {
    require_shape(x.cols == width, "batch norm input width");
    const std::size_t n = x.rows;
    if (train && n < 2) throw config_error("batch norm train mode needs a batch of at least 2");

    std::vector<double> mean(width, 0.0), var(width, 0.0);
    if (train) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < width; ++j) mean[j] += x(i, j);
      for (double& m : mean) m /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < width; ++j) {
          const double d = x(i, j) - mean[j];
          var[j] += d * d;
        }
      for (double& v : var) v /= static_cast<double>(n);
      for (std::size_t j = 0; j < width; ++j) {
        const double unbiased = var[j] * static_cast<double>(n) / static_cast<double>(n - 1);
        running_mean.data[j] = (1.0 - momentum) * running_mean.data[j] + momentum * mean[j];
        running_var.data[j] = (1.0 - momentum) * running_var.data[j] + momentum * unbiased;
      }
    } else {
      mean = running_mean.data;
      var = running_var.data;
    }

    std::vector<double> inv_std(width);
    for (std::size_t j = 0; j < width; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
    Matrix xhat(ctx ? n : 0, ctx ? width : 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        const double xh = (x(i, j) - mean[j]) * inv_std[j];
        if (ctx) xhat(i, j) = xh;
        x(i, j) = gamma.value.data[j] * xh + beta.value.data[j];
      }
    if (ctx) {
      ctx->xhat = std::move(xhat);
      ctx->inv_std = std::move(inv_std);
      ctx->train = train;
    }
    return x;
  }

  // Exact derivative through the batch statistics in train mode:
  //   dx = gamma * inv_std / n * (n dy - sum(dy) - xhat * sum(dy * xhat))
  // per column. Eval mode treats the statistics as constants. dy is consumed
  // and rewritten into dx once the column sums are banked.
  Matrix backward(const Ctx& ctx, Matrix dy) {
    require_shape(dy.cols == width && dy.rows == ctx.xhat.rows, "batch norm upstream gradient");
    const std::size_t n = dy.rows;
    std::vector<double> sum_dy(width, 0.0), sum_dy_xhat(width, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        sum_dy[j] += dy(i, j);
        sum_dy_xhat[j] += dy(i, j) * ctx.xhat(i, j);
      }
    for (std::size_t j = 0; j < width; ++j) {
      gamma.grad.data[j] += sum_dy_xhat[j];
      beta.grad.data[j] += sum_dy[j];
    }

    if (ctx.train) {
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < width; ++j) {
          const double g = gamma.value.data[j] * ctx.inv_std[j];
          dy(i, j) = g * (dy(i, j) - inv_n * sum_dy[j] - ctx.xhat(i, j) * inv_n * sum_dy_xhat[j]);
        }
    } else {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < width; ++j) dy(i, j) *= gamma.value.data[j] * ctx.inv_std[j];
    }
    return dy;
  }

  std::vector<Param*> params() { return {&gamma, &beta}; }
};

// The backward gate x > 0 coincides elementwise with y > 0 on the clamped
// output, so the ctx stores a byte mask instead of the activations.
struct ReluCtx {
  std::vector<unsigned char> pos;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

inline Matrix relu_forward(Matrix x, ReluCtx* ctx = nullptr) {
  if (ctx) {
    ctx->rows = x.rows;
    ctx->cols = x.cols;
    ctx->pos.resize(x.data.size());
    for (std::size_t i = 0; i < x.data.size(); ++i) ctx->pos[i] = x.data[i] > 0.0;
  }
  for (double& v : x.data) v = v > 0.0 ? v : 0.0;
  return x;
}

inline Matrix relu_backward(const ReluCtx& ctx, Matrix dy) {
  require_shape(dy.rows == ctx.rows && dy.cols == ctx.cols, "relu upstream gradient");
  for (std::size_t i = 0; i < dy.data.size(); ++i)
    if (!ctx.pos[i]) dy.data[i] = 0.0;
  return dy;
}

struct SoftplusCtx {
  Matrix x;
};

// softplus(u) = ln(1 + e^u) for u <= threshold, identity passthrough above it
// (overflow guard). Unit sharpness; output is strictly positive below the
// threshold and continuous across it to within representable precision. The
// backward pass needs the pre-activation values, so with a ctx the consumed
// input is parked there and one copy is transformed; without one (eval) the
// input is transformed in place.
inline Matrix softplus_forward(Matrix x, SoftplusCtx* ctx = nullptr, double threshold = 20.0) {
  if (ctx) {
    ctx->x = std::move(x);
    Matrix y = ctx->x;
    for (double& v : y.data) v = v > threshold ? v : std::log1p(std::exp(v));
    return y;
  }
  for (double& v : x.data) v = v > threshold ? v : std::log1p(std::exp(v));
  return x;
}

inline Matrix softplus_backward(const SoftplusCtx& ctx, Matrix dy, double threshold = 20.0) {
  require_shape(dy.rows == ctx.x.rows && dy.cols == ctx.x.cols, "softplus upstream gradient");
  for (std::size_t i = 0; i < dy.data.size(); ++i) {
    const double u = ctx.x.data[i];
    if (u <= threshold) dy.data[i] *= 1.0 / (1.0 + std::exp(-u));
  }
  return dy;
}

}  // namespace swapvae
