#pragma once

// Split-latent variational autoencoder over spike counts. The latent code is
// partitioned into a deterministic content block, aligned across two augmented
// views of the same row, and a Gaussian style block regularized toward N(0, I).
// BlockSwap exchanges the content blocks of the two views' codes before
// decoding, forcing reconstructions to survive on the partner view's content.
//
// Loss variants (rec terms are Poisson NLL, batch means):
//   variant       rec_orig  rec_swap  beta*KL     alpha*align  views
//   full             yes       yes    style        yes           2
//   no_l2            yes       yes    style        no            2
//   no_swap          yes       no     style        yes           2
//   swap_only        no        yes    style        no            2
//   vanilla_vae      yes       no     full latent  no            1
// vanilla_vae requires k_c = 0 so the style block is the whole latent; the
// beta-VAE baseline trains through the same path with beta free.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "swapvae/adam.hpp"
#include "swapvae/checkpoint.hpp"
#include "swapvae/dataset.hpp"
#include "swapvae/layers.hpp"
#include "swapvae/losses.hpp"
#include "swapvae/matrix.hpp"
#include "swapvae/rng.hpp"

namespace swapvae {

struct AugmentationConfig {
  double drop_prob = 0.6;  // per-neuron zeroing probability
  int jitter_window = 5;   // temporal jitter range in bins, clipped at trial edges
  bool enable_spatial = true;
  bool enable_temporal = true;
  bool uniform_drop = false;  // per-view rate drawn uniformly from [0, drop_prob]

  void validate() const {
    if (!(drop_prob >= 0.0 && drop_prob < 1.0))
      throw config_error("drop_prob must lie in [0, 1)");
    if (jitter_window < 0) throw config_error("jitter_window must be >= 0");
  }
};

// Uniform choice among same-trial rows within +-window time bins of `row`,
// including row itself. Rows of a trial are contiguous with consecutive
// y_time (dataset invariant), so index distance equals time distance.
inline size_t jitter_row(const BinnedDataset& ds, size_t row, int window, Rng& rng) {
  size_t lo = row, hi = row;
  while (lo > 0 && ds.trial_id[lo - 1] == ds.trial_id[row] &&
         static_cast<int>(row - (lo - 1)) <= window)
    --lo;
  while (hi + 1 < ds.n() && ds.trial_id[hi + 1] == ds.trial_id[row] &&
         static_cast<int>((hi + 1) - row) <= window)
    ++hi;
  return lo + static_cast<size_t>(rng.below(hi - lo + 1));
}

struct AugmentedPair {
  Matrix x1{1, 1}, x2{1, 1};  // 1 x d views
  size_t row1 = 0, row2 = 0;  // source rows after jitter
};

// Two independently augmented views of one row. Draw order per view: jitter
// choice (if temporal), then the per-view drop rate (if uniform_drop), then
// one uniform per coordinate (if spatial); the order is part of the
// determinism contract.
inline AugmentedPair augment_pair(const BinnedDataset& ds, size_t row,
                                  const AugmentationConfig& cfg, Rng& rng) {
  cfg.validate();
  if (row >= ds.n()) throw data_error("augment_pair row out of range");
  AugmentedPair out;
  Matrix* views[2] = {&out.x1, &out.x2};
  size_t* rows[2] = {&out.row1, &out.row2};
  for (int v = 0; v < 2; ++v) {
    size_t src = row;
    if (cfg.enable_temporal && cfg.jitter_window > 0)
      src = jitter_row(ds, row, cfg.jitter_window, rng);
    *rows[v] = src;
    Matrix x(1, ds.d());
    for (size_t j = 0; j < ds.d(); ++j) x(0, j) = ds.X(src, j);
    if (cfg.enable_spatial) {
      const double rate = cfg.uniform_drop ? rng.uniform() * cfg.drop_prob : cfg.drop_prob;
      for (size_t j = 0; j < ds.d(); ++j)
        if (rng.uniform() < rate) x(0, j) = 0.0;
    }
    *views[v] = std::move(x);
  }
  return out;
}

enum class Mode { train, eval };

// Batched latent code. style_sample = style_mu + exp(style_logvar/2) * eps
// with eps recorded; content is deterministic unless the model was built with
// stochastic_content, in which case content is reparameterized the same way
// (KL still applies to style only).
struct LatentCode {
  Matrix content{0, 0};
  Matrix style_mu{0, 0};
  Matrix style_logvar{0, 0};
  Matrix style_sample{0, 0};
  Matrix style_eps{0, 0};
  Matrix content_mu{0, 0};      // stochastic_content only
  Matrix content_logvar{0, 0};  // stochastic_content only
  Matrix content_eps{0, 0};     // stochastic_content only
};

// swapped1 = [code2.content, code1 style]; swapped2 = [code1.content, code2
// style]. Performed after reparameterization: the style samples travel with
// their own view. An involution that preserves the multiset of blocks.
inline std::pair<LatentCode, LatentCode> block_swap(const LatentCode& code1,
                                                    const LatentCode& code2) {
  require_shape(code1.content.cols == code2.content.cols &&
                    code1.style_sample.cols == code2.style_sample.cols,
                "block_swap split sizes");
  LatentCode s1 = code1;
  LatentCode s2 = code2;
  s1.content = code2.content;
  s2.content = code1.content;
  s1.content_mu = code2.content_mu;
  s2.content_mu = code1.content_mu;
  s1.content_logvar = code2.content_logvar;
  s2.content_logvar = code1.content_logvar;
  s1.content_eps = code2.content_eps;
  s2.content_eps = code1.content_eps;
  return {std::move(s1), std::move(s2)};
}

enum class Variant { full, no_l2, no_swap, swap_only, vanilla_vae };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_l2: return "no_l2";
    case Variant::no_swap: return "no_swap";
    case Variant::swap_only: return "swap_only";
    case Variant::vanilla_vae: return "vanilla_vae";
  }
  throw config_error("unknown loss variant");
}

inline Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "no_l2") return Variant::no_l2;
  if (s == "no_swap") return Variant::no_swap;
  if (s == "swap_only") return Variant::swap_only;
  if (s == "vanilla_vae") return Variant::vanilla_vae;
  throw config_error("unknown loss variant: " + s);
}

struct LossWeights {
  double alpha = 1.0;  // alignment weight
  double beta = 1.0;   // KL weight
  Variant variant = Variant::full;

  void validate() const {
    if (!(alpha >= 0.0)) throw config_error("alpha must be >= 0");
    if (!(beta >= 0.0)) throw config_error("beta must be >= 0");
  }
};

struct LossBreakdown {
  double rec_orig = 0.0;
  double rec_swap = 0.0;
  double kl = 0.0;     // unweighted
  double align = 0.0;  // unweighted
  double total = 0.0;  // rec_orig + rec_swap + beta*kl + alpha*align
};

struct SwapVaeConfig {
  size_t d = 0;
  size_t k_c = 0;
  size_t k_s = 0;
  size_t hidden = 128;
  bool stochastic_content = false;

  size_t head_width() const { return (stochastic_content ? 2 * k_c : k_c) + 2 * k_s; }
  size_t k() const { return k_c + k_s; }

  void validate() const {
    if (d < 1) throw config_error("model needs d >= 1");
    if (k_c + k_s < 1) throw config_error("model needs k_c + k_s >= 1");
    if (hidden < 1) throw config_error("model needs hidden >= 1");
  }
};

// Encoder d -> hidden -> hidden -> head, batch norm + ReLU on the two hidden
// layers. Decoder (k_c+k_s) -> hidden -> hidden -> d, same hidden treatment,
// softplus output so rates are strictly positive.
struct EncoderNet {
  Linear l1, l2, head;
  BatchNorm bn1, bn2;

  EncoderNet() = default;
  EncoderNet(size_t d, size_t hidden, size_t head_width)
      : l1("enc.l1", d, hidden),
        l2("enc.l2", hidden, hidden),
        head("enc.head", hidden, head_width),
        bn1("enc.bn1", hidden),
        bn2("enc.bn2", hidden) {}

  void init(Rng& rng) {
    l1.init(rng);
    l2.init(rng);
    head.init(rng);
  }

  struct Ctx {
    Linear::Ctx l1, l2, head;
    BatchNorm::Ctx bn1, bn2;
    ReluCtx r1, r2;
  };

  Matrix forward(const Matrix& x, bool train, Ctx* ctx) {
    Matrix h = l1.forward(x, ctx ? &ctx->l1 : nullptr);
    h = bn1.forward(std::move(h), train, ctx ? &ctx->bn1 : nullptr);
    h = relu_forward(std::move(h), ctx ? &ctx->r1 : nullptr);
    h = l2.forward(std::move(h), ctx ? &ctx->l2 : nullptr);
    h = bn2.forward(std::move(h), train, ctx ? &ctx->bn2 : nullptr);
    h = relu_forward(std::move(h), ctx ? &ctx->r2 : nullptr);
    return head.forward(std::move(h), ctx ? &ctx->head : nullptr);
  }

  Matrix backward(const Ctx& ctx, const Matrix& dhead) {
    Matrix g = head.backward(ctx.head, dhead);
    g = relu_backward(ctx.r2, std::move(g));
    g = bn2.backward(ctx.bn2, std::move(g));
    g = l2.backward(ctx.l2, g);
    g = relu_backward(ctx.r1, std::move(g));
    g = bn1.backward(ctx.bn1, std::move(g));
    return l1.backward(ctx.l1, g);
  }

  std::vector<Param*> params() {
    return {&l1.weight, &l1.bias, &bn1.gamma, &bn1.beta, &l2.weight, &l2.bias,
            &bn2.gamma, &bn2.beta, &head.weight, &head.bias};
  }
};

struct DecoderNet {
  Linear l1, l2, out;
  BatchNorm bn1, bn2;

  DecoderNet() = default;
  DecoderNet(size_t k, size_t hidden, size_t d)
      : l1("dec.l1", k, hidden),
        l2("dec.l2", hidden, hidden),
        out("dec.out", hidden, d),
        bn1("dec.bn1", hidden),
        bn2("dec.bn2", hidden) {}

  void init(Rng& rng) {
    l1.init(rng);
    l2.init(rng);
    out.init(rng);
  }

  struct Ctx {
    Linear::Ctx l1, l2, out;
    BatchNorm::Ctx bn1, bn2;
    ReluCtx r1, r2;
    SoftplusCtx sp;
  };

  Matrix forward(Matrix z, bool train, Ctx* ctx) {
    Matrix h = l1.forward(std::move(z), ctx ? &ctx->l1 : nullptr);
    h = bn1.forward(std::move(h), train, ctx ? &ctx->bn1 : nullptr);
    h = relu_forward(std::move(h), ctx ? &ctx->r1 : nullptr);
    h = l2.forward(std::move(h), ctx ? &ctx->l2 : nullptr);
    h = bn2.forward(std::move(h), train, ctx ? &ctx->bn2 : nullptr);
    h = relu_forward(std::move(h), ctx ? &ctx->r2 : nullptr);
    h = out.forward(std::move(h), ctx ? &ctx->out : nullptr);
    return softplus_forward(std::move(h), ctx ? &ctx->sp : nullptr);
  }

  Matrix backward(const Ctx& ctx, Matrix drates) {
    Matrix g = softplus_backward(ctx.sp, std::move(drates));
    g = out.backward(ctx.out, g);
    g = relu_backward(ctx.r2, std::move(g));
    g = bn2.backward(ctx.bn2, std::move(g));
    g = l2.backward(ctx.l2, g);
    g = relu_backward(ctx.r1, std::move(g));
    g = bn1.backward(ctx.bn1, std::move(g));
    return l1.backward(ctx.l1, g);
  }

  std::vector<Param*> params() {
    return {&l1.weight, &l1.bias, &bn1.gamma, &bn1.beta, &l2.weight, &l2.bias,
            &bn2.gamma, &bn2.beta, &out.weight, &out.bias};
  }
};

class SwapVae {
 public:
  SwapVae() = default;
  SwapVae(SwapVaeConfig cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    enc_ = EncoderNet(cfg_.d, cfg_.hidden, cfg_.head_width());
    dec_ = DecoderNet(cfg_.k(), cfg_.hidden, cfg_.d);
    enc_.init(rng);
    dec_.init(rng);
  }

  const SwapVaeConfig& config() const { return cfg_; }
  EncoderNet& encoder() { return enc_; }
  DecoderNet& decoder() { return dec_; }

  std::vector<Param*> params() {
    std::vector<Param*> out = enc_.params();
    for (Param* p : dec_.params()) out.push_back(p);
    return out;
  }

  // Parameters plus batch-norm running buffers, in a fixed order; this is the
  // checkpointed state (optimizer moments are appended by the trainer).
  StateDict state_dict() {
    StateDict sd;
    for (Param* p : params()) sd.emplace_back(p->name, &p->value);
    sd.emplace_back("enc.bn1.running_mean", &enc_.bn1.running_mean);
    sd.emplace_back("enc.bn1.running_var", &enc_.bn1.running_var);
    sd.emplace_back("enc.bn2.running_mean", &enc_.bn2.running_mean);
    sd.emplace_back("enc.bn2.running_var", &enc_.bn2.running_var);
    sd.emplace_back("dec.bn1.running_mean", &dec_.bn1.running_mean);
    sd.emplace_back("dec.bn1.running_var", &dec_.bn1.running_var);
    sd.emplace_back("dec.bn2.running_mean", &dec_.bn2.running_mean);
    sd.emplace_back("dec.bn2.running_var", &dec_.bn2.running_var);
    return sd;
  }

  // Batched encode. Train mode standardizes by batch statistics and samples
  // the stochastic blocks with the given eps (pass eps of zeros to reproduce
  // the eval encoding); eval mode uses running statistics and eps = 0.
  LatentCode encode_batch(const Matrix& x, Mode mode, const Matrix* eps = nullptr,
                          EncoderNet::Ctx* ctx = nullptr, const Matrix* content_eps = nullptr) {
    require_shape(x.cols == cfg_.d, "encode input width");
    const bool train = mode == Mode::train;
    Matrix head = enc_.forward(x, train, ctx);
    check_finite(head, "encoder activations");
    const size_t n = x.rows;
    LatentCode code;
    size_t off = 0;
    if (cfg_.stochastic_content) {
      code.content_mu = slice_cols(head, off, cfg_.k_c);
      off += cfg_.k_c;
      code.content_logvar = slice_cols(head, off, cfg_.k_c);
      off += cfg_.k_c;
      code.content_eps = make_eps(n, cfg_.k_c, train ? content_eps : nullptr);
      code.content = reparameterize(code.content_mu, code.content_logvar, code.content_eps);
    } else {
      code.content = slice_cols(head, off, cfg_.k_c);
      off += cfg_.k_c;
    }
    code.style_mu = slice_cols(head, off, cfg_.k_s);
    off += cfg_.k_s;
    code.style_logvar = slice_cols(head, off, cfg_.k_s);
    code.style_eps = make_eps(n, cfg_.k_s, train ? eps : nullptr);
    code.style_sample = reparameterize(code.style_mu, code.style_logvar, code.style_eps);
    return code;
  }

  // Single-row convenience encode matching the evaluation convention: batch
  // norm always reads the running statistics (a one-row batch has no batch
  // statistics), and train mode only switches on style sampling through rng.
  LatentCode encode(const Matrix& x, Mode mode, Rng* rng = nullptr) {
    require_shape(x.rows >= 1, "encode needs at least one row");
    Matrix eps(x.rows, cfg_.k_s);
    Matrix ceps(x.rows, cfg_.stochastic_content ? cfg_.k_c : 0);
    if (mode == Mode::train && rng) {
      for (double& v : eps.data) v = rng->normal();
      for (double& v : ceps.data) v = rng->normal();
    }
    Matrix head = enc_.forward(x, false, nullptr);
    check_finite(head, "encoder activations");
    LatentCode code;
    size_t off = 0;
    if (cfg_.stochastic_content) {
      code.content_mu = slice_cols(head, off, cfg_.k_c);
      off += cfg_.k_c;
      code.content_logvar = slice_cols(head, off, cfg_.k_c);
      off += cfg_.k_c;
      code.content_eps = ceps;
      code.content = reparameterize(code.content_mu, code.content_logvar, ceps);
    } else {
      code.content = slice_cols(head, off, cfg_.k_c);
      off += cfg_.k_c;
    }
    code.style_mu = slice_cols(head, off, cfg_.k_s);
    off += cfg_.k_s;
    code.style_logvar = slice_cols(head, off, cfg_.k_s);
    code.style_eps = Matrix(x.rows, cfg_.k_s);
    if (mode == Mode::train) code.style_eps = eps;
    code.style_sample = reparameterize(code.style_mu, code.style_logvar, code.style_eps);
    return code;
  }

  Matrix decode(const Matrix& content, const Matrix& style, Mode mode = Mode::eval,
                DecoderNet::Ctx* ctx = nullptr) {
    require_shape(content.rows == style.rows, "decode batch sizes");
    require_shape(content.cols == cfg_.k_c && style.cols == cfg_.k_s, "decode split widths");
    Matrix z = concat_cols(content, style);
    Matrix rates = dec_.forward(std::move(z), mode == Mode::train, ctx);
    check_finite(rates, "decoder rates");
    return rates;
  }

  // Deterministic eval-mode features for probes and export: content block,
  // style mean, or their concatenation ("full").
  Matrix features(const Matrix& x, const std::string& space) {
    LatentCode code = encode(x, Mode::eval);
    if (space == "content") return code.content;
    if (space == "style") return code.style_mu;
    if (space == "full") return concat_cols(code.content, code.style_mu);
    throw config_error("unknown feature space: " + space);
  }

  // Variant-dispatched training loss on two augmented views. Gradients
  // accumulate into Param::grad (zero them first). eps matrices fix the
  // reparameterization draws so the same call is exactly repeatable.
  double loss_total(const Matrix& x1, const Matrix& x2, const LossWeights& weights,
                    const Matrix& eps1, const Matrix& eps2, LossBreakdown* breakdown = nullptr,
                    bool compute_grads = true, const Matrix* ceps1 = nullptr,
                    const Matrix* ceps2 = nullptr) {
    weights.validate();
    if (weights.variant == Variant::vanilla_vae)
      return vanilla_loss(x1, weights, eps1, breakdown, compute_grads);

    require_shape(x1.rows == x2.rows && x1.cols == x2.cols, "loss_total views");
    const bool want_orig = weights.variant != Variant::swap_only;
    const bool want_swap =
        weights.variant == Variant::full || weights.variant == Variant::no_l2 ||
        weights.variant == Variant::swap_only;
    const bool want_align =
        weights.variant == Variant::full || weights.variant == Variant::no_swap;

    EncoderNet::Ctx ectx1, ectx2;
    LatentCode c1 = encode_batch(x1, Mode::train, &eps1, &ectx1, ceps1);
    LatentCode c2 = encode_batch(x2, Mode::train, &eps2, &ectx2, ceps2);

    LossBreakdown bd;
    Matrix dcontent1(x1.rows, cfg_.k_c), dcontent2(x1.rows, cfg_.k_c);
    Matrix dstyle1(x1.rows, cfg_.k_s), dstyle2(x1.rows, cfg_.k_s);

    // Reconstructions of each view from its own code, then from the swapped
    // code; decoder batch-norm sees each decode as its own batch, in this
    // fixed order.
    if (want_orig) {
      bd.rec_orig += decode_term(x1, c1.content, c1.style_sample, compute_grads, &dcontent1,
                                 &dstyle1);
      bd.rec_orig += decode_term(x2, c2.content, c2.style_sample, compute_grads, &dcontent2,
                                 &dstyle2);
    }
    if (want_swap) {
      bd.rec_swap += decode_term(x1, c2.content, c1.style_sample, compute_grads, &dcontent2,
                                 &dstyle1);
      bd.rec_swap += decode_term(x2, c1.content, c2.style_sample, compute_grads, &dcontent1,
                                 &dstyle2);
    }

    Matrix dmu1, dlv1, dmu2, dlv2;
    bd.kl = kl_gaussian(c1.style_mu, c1.style_logvar, compute_grads ? &dmu1 : nullptr,
                        compute_grads ? &dlv1 : nullptr) +
            kl_gaussian(c2.style_mu, c2.style_logvar, compute_grads ? &dmu2 : nullptr,
                        compute_grads ? &dlv2 : nullptr);

    Matrix dalign1, dalign2;
    if (want_align)
      bd.align = align_loss(c1.content, c2.content, compute_grads ? &dalign1 : nullptr,
                            compute_grads ? &dalign2 : nullptr);

    bd.total = bd.rec_orig + bd.rec_swap + weights.beta * bd.kl + weights.alpha * bd.align;
    if (breakdown) *breakdown = bd;
    if (!compute_grads) return bd.total;

    if (want_align) {
      add_scaled(dcontent1, dalign1, weights.alpha);
      add_scaled(dcontent2, dalign2, weights.alpha);
    }
    backprop_view(ectx1, c1, dcontent1, dstyle1, dmu1, dlv1, weights.beta);
    backprop_view(ectx2, c2, dcontent2, dstyle2, dmu2, dlv2, weights.beta);
    return bd.total;
  }

  // Style-perturbation generation: keep the content of x, add noise_scale *
  // N(0, I) to the style mean, decode to rates.
  Matrix generate_virtual(const Matrix& x, double noise_scale, Rng& rng) {
    if (noise_scale < 0) throw config_error("noise_scale must be >= 0");
    LatentCode code = encode(x, Mode::eval);
    Matrix style = code.style_mu;
    for (double& v : style.data) v += noise_scale * rng.normal();
    return decode(code.content, style, Mode::eval);
  }

 private:
  static Matrix slice_cols(const Matrix& m, size_t start, size_t width) {
    Matrix out(m.rows, width);
    for (size_t i = 0; i < m.rows; ++i)
      for (size_t j = 0; j < width; ++j) out(i, j) = m(i, start + j);
    return out;
  }

  static Matrix concat_cols(const Matrix& a, const Matrix& b) {
    require_shape(a.rows == b.rows, "concat rows");
    Matrix out(a.rows, a.cols + b.cols);
    for (size_t i = 0; i < a.rows; ++i) {
      for (size_t j = 0; j < a.cols; ++j) out(i, j) = a(i, j);
      for (size_t j = 0; j < b.cols; ++j) out(i, a.cols + j) = b(i, j);
    }
    return out;
  }

  static Matrix make_eps(size_t n, size_t k, const Matrix* eps) {
    if (!eps) return Matrix(n, k);
    require_shape(eps->rows == n && eps->cols == k, "reparameterization eps");
    return *eps;
  }

  static Matrix reparameterize(const Matrix& mu, const Matrix& logvar, const Matrix& eps) {
    Matrix out = mu;
    for (size_t i = 0; i < out.data.size(); ++i)
      out.data[i] += std::exp(0.5 * logvar.data[i]) * eps.data[i];
    return out;
  }

  static void add_scaled(Matrix& acc, const Matrix& g, double scale) {
    require_shape(acc.rows == g.rows && acc.cols == g.cols, "gradient accumulation");
    for (size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += scale * g.data[i];
  }

  static void check_finite(const Matrix& m, const std::string& what) {
    for (double v : m.data)
      if (!std::isfinite(v)) throw numeric_error("non-finite " + what);
  }

  // One reconstruction term: decode [content|style] in train mode, Poisson NLL
  // against target, backprop the decoder, accumulate latent gradients.
  double decode_term(const Matrix& target, const Matrix& content, const Matrix& style,
                     bool compute_grads, Matrix* dcontent, Matrix* dstyle) {
    DecoderNet::Ctx ctx;
    Matrix z = concat_cols(content, style);
    Matrix rates = dec_.forward(std::move(z), true, &ctx);
    check_finite(rates, "decoder rates");
    Matrix drates;
    const double nll = poisson_nll(target, rates, compute_grads ? &drates : nullptr);
    if (compute_grads) {
      Matrix dz = dec_.backward(ctx, std::move(drates));
      for (size_t i = 0; i < dz.rows; ++i) {
        for (size_t j = 0; j < cfg_.k_c; ++j) (*dcontent)(i, j) += dz(i, j);
        for (size_t j = 0; j < cfg_.k_s; ++j) (*dstyle)(i, j) += dz(i, cfg_.k_c + j);
      }
    }
    return nll;
  }

  // Collapse one view's latent gradients onto the encoder head and backprop.
  // dstyle flows into mu directly and into logvar through the 0.5*sigma*eps
  // factor of the reparameterization; KL gradients add beta-scaled.
  void backprop_view(EncoderNet::Ctx& ectx, const LatentCode& code, const Matrix& dcontent,
                     const Matrix& dstyle, const Matrix& dmu_kl, const Matrix& dlv_kl,
                     double beta) {
    const size_t n = dcontent.rows;
    Matrix dhead(n, cfg_.head_width());
    size_t off = 0;
    if (cfg_.stochastic_content) {
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < cfg_.k_c; ++j) {
          const double sigma_eps =
              std::exp(0.5 * code.content_logvar(i, j)) * code.content_eps(i, j);
          dhead(i, off + j) = dcontent(i, j);
          dhead(i, off + cfg_.k_c + j) = 0.5 * dcontent(i, j) * sigma_eps;
        }
      off += 2 * cfg_.k_c;
    } else {
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < cfg_.k_c; ++j) dhead(i, off + j) = dcontent(i, j);
      off += cfg_.k_c;
    }
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < cfg_.k_s; ++j) {
        const double sigma_eps = std::exp(0.5 * code.style_logvar(i, j)) * code.style_eps(i, j);
        dhead(i, off + j) = dstyle(i, j) + beta * dmu_kl(i, j);
        dhead(i, off + cfg_.k_s + j) =
            0.5 * dstyle(i, j) * sigma_eps + beta * dlv_kl(i, j);
      }
    enc_.backward(ectx, dhead);
  }

  // Single-view variant: reconstruction plus beta * KL over the whole latent.
  // Requires k_c = 0 so "style" is the full latent.
  double vanilla_loss(const Matrix& x, const LossWeights& weights, const Matrix& eps,
                      LossBreakdown* breakdown, bool compute_grads) {
    if (cfg_.k_c != 0)
      throw config_error("vanilla_vae variant requires k_c = 0 (full latent under KL)");
    EncoderNet::Ctx ectx;
    LatentCode code = encode_batch(x, Mode::train, &eps, &ectx);
    LossBreakdown bd;
    Matrix dcontent(x.rows, 0), dstyle(x.rows, cfg_.k_s);
    bd.rec_orig = decode_term(x, code.content, code.style_sample, compute_grads, &dcontent,
                              &dstyle);
    Matrix dmu, dlv;
    bd.kl = kl_gaussian(code.style_mu, code.style_logvar, compute_grads ? &dmu : nullptr,
                        compute_grads ? &dlv : nullptr);
    bd.total = bd.rec_orig + weights.beta * bd.kl;
    if (breakdown) *breakdown = bd;
    if (!compute_grads) return bd.total;
    backprop_view(ectx, code, dcontent, dstyle, dmu, dlv, weights.beta);
    return bd.total;
  }

  SwapVaeConfig cfg_;
  EncoderNet enc_;
  DecoderNet dec_;
};

}  // namespace swapvae
