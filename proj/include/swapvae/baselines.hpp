#pragma once

// Comparison models sharing the layer zoo: a beta-VAE over an unsplit latent
// (the vanilla VAE is its beta = 1 point), a supervised MLP classifier, and
// the ablation table mapping variant names to loss/augmentation configs.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "swapvae/losses.hpp"
#include "swapvae/model.hpp"

namespace swapvae {

// Same backbone as the split model with k_c = 0: the head emits 2k units
// (mean | log-variance) and the KL covers the whole latent. beta = 0 is
// allowed and degenerates to an autoencoder with sampling noise.
class BetaVae {
 public:
  BetaVae() = default;
  BetaVae(size_t d, size_t k, double beta, Rng& rng, size_t hidden = 128)
      : core_(SwapVaeConfig{d, 0, k, hidden, false}, rng), beta_(beta) {
    if (!(beta >= 0.0)) throw config_error("beta must be >= 0");
  }

  SwapVae& core() { return core_; }
  double beta() const { return beta_; }
  size_t k() const { return core_.config().k_s; }

  std::vector<Param*> params() { return core_.params(); }
  StateDict state_dict() { return core_.state_dict(); }

  // Single-view ELBO-style loss: Poisson NLL + beta * KL(full latent).
  double loss(const Matrix& x, const Matrix& eps, LossBreakdown* breakdown = nullptr,
              bool compute_grads = true) {
    LossWeights w;
    w.variant = Variant::vanilla_vae;
    w.alpha = 0.0;
    w.beta = beta_;
    return core_.loss_total(x, x, w, eps, eps, breakdown, compute_grads);
  }

  // Full-latent posterior mean in eval mode; the probe/score features.
  Matrix features(const Matrix& x) { return core_.features(x, "style"); }

  Matrix reconstruct(const Matrix& x) {
    LatentCode code = core_.encode(x, Mode::eval);
    return core_.decode(code.content, code.style_mu, Mode::eval);
  }

 private:
  SwapVae core_;
  double beta_ = 1.0;
};

// Classifier: trunk of three ReLU linear layers plus a linear head (four
// linear maps total, no batch norm). The 128-d post-ReLU trunk output is the
// representation evaluated by probes and the disentanglement score.
class Supervised {
 public:
  Supervised() = default;
  Supervised(size_t d, size_t n_classes, Rng& rng, size_t hidden = 128)
      : l1_("sup.l1", d, hidden),
        l2_("sup.l2", hidden, hidden),
        l3_("sup.l3", hidden, hidden),
        head_("sup.head", hidden, n_classes),
        n_classes_(n_classes) {
    if (n_classes < 2) throw config_error("classifier needs at least 2 classes");
    l1_.init(rng);
    l2_.init(rng);
    l3_.init(rng);
    head_.init(rng);
  }

  size_t n_classes() const { return n_classes_; }
  size_t d() const { return l1_.in; }
  size_t hidden() const { return l1_.out; }

  std::vector<Param*> params() {
    return {&l1_.weight, &l1_.bias, &l2_.weight, &l2_.bias,
            &l3_.weight, &l3_.bias, &head_.weight, &head_.bias};
  }

  StateDict state_dict() {
    StateDict sd;
    for (Param* p : params()) sd.emplace_back(p->name, &p->value);
    return sd;
  }

  struct Ctx {
    Linear::Ctx l1, l2, l3, head;
    ReluCtx r1, r2, r3;
  };

  Matrix trunk(const Matrix& x, Ctx* ctx = nullptr) {
    Matrix h = l1_.forward(x, ctx ? &ctx->l1 : nullptr);
    h = relu_forward(std::move(h), ctx ? &ctx->r1 : nullptr);
    h = l2_.forward(std::move(h), ctx ? &ctx->l2 : nullptr);
    h = relu_forward(std::move(h), ctx ? &ctx->r2 : nullptr);
    h = l3_.forward(std::move(h), ctx ? &ctx->l3 : nullptr);
    return relu_forward(std::move(h), ctx ? &ctx->r3 : nullptr);
  }

  Matrix logits(const Matrix& x, Ctx* ctx = nullptr) {
    return head_.forward(trunk(x, ctx), ctx ? &ctx->head : nullptr);
  }

  // The frozen representation consumed by evaluation.
  Matrix hidden_features(const Matrix& x) { return trunk(x); }

  // Mean cross entropy; gradients accumulate into Param::grad.
  double loss(const Matrix& x, const std::vector<int64_t>& y, bool compute_grads = true) {
    Ctx ctx;
    Matrix lg = logits(x, &ctx);
    Matrix dlogits;
    const double ce = softmax_cross_entropy(lg, y, compute_grads ? &dlogits : nullptr);
    if (compute_grads) {
      Matrix g = head_.backward(ctx.head, dlogits);
      g = relu_backward(ctx.r3, std::move(g));
      g = l3_.backward(ctx.l3, g);
      g = relu_backward(ctx.r2, std::move(g));
      g = l2_.backward(ctx.l2, g);
      g = relu_backward(ctx.r1, std::move(g));
      l1_.backward(ctx.l1, g);
    }
    return ce;
  }

  // Percent correct, matching the probe accuracy convention.
  double accuracy(const Matrix& x, const std::vector<int64_t>& y) {
    Matrix lg = logits(x);
    size_t hits = 0;
    for (size_t i = 0; i < lg.rows; ++i) {
      size_t arg = 0;
      for (size_t j = 1; j < lg.cols; ++j)
        if (lg(i, j) > lg(i, arg)) arg = j;
      if (static_cast<int64_t>(arg) == y[i]) ++hits;
    }
    return lg.rows == 0 ? 0.0 : 100.0 * double(hits) / double(lg.rows);
  }

 private:
  Linear l1_, l2_, l3_, head_;
  size_t n_classes_ = 0;
};

struct AblationSpec {
  LossWeights weights;
  AugmentationConfig augmentation;
};

// Variant table: loss variants force the corresponding weights; augmentation
// variants keep the full loss and disable one augmentation. vanilla_vae runs
// through the beta-VAE path with beta = 1.
inline AblationSpec make_ablation(const std::string& variant, const LossWeights& base_weights,
                                  const AugmentationConfig& base_aug) {
  AblationSpec spec{base_weights, base_aug};
  if (variant == "full") {
    spec.weights.variant = Variant::full;
  } else if (variant == "no_l2") {
    spec.weights.variant = Variant::no_l2;
    spec.weights.alpha = 0.0;
  } else if (variant == "no_swap") {
    spec.weights.variant = Variant::no_swap;
  } else if (variant == "swap_only") {
    spec.weights.variant = Variant::swap_only;
    spec.weights.alpha = 0.0;
  } else if (variant == "vanilla_vae") {
    spec.weights.variant = Variant::vanilla_vae;
    spec.weights.alpha = 0.0;
    spec.weights.beta = 1.0;
  } else if (variant == "s_aug_only") {
    spec.weights.variant = Variant::full;
    spec.augmentation.enable_temporal = false;
  } else if (variant == "t_aug_only") {
    spec.weights.variant = Variant::full;
    spec.augmentation.enable_spatial = false;
    spec.augmentation.drop_prob = 0.0;
  } else {
    throw config_error("unknown ablation variant: " + variant);
  }
  return spec;
}

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v = {"full",        "no_l2",      "no_swap", "swap_only",
                                             "vanilla_vae", "s_aug_only", "t_aug_only"};
  return v;
}

}  // namespace swapvae
