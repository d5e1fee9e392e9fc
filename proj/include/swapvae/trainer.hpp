#pragma once

// Deterministic, resumable minibatch training. All randomness is derived from
// (seed, tag, index) substreams keyed by global counters: the row permutation
// of epoch e, the augmentation draws of iteration i, and the reparameterization
// draws of iteration i are each pure functions of the config seed. A resumed
// run therefore consumes exactly the streams the uninterrupted run would have,
// and train(E1) + train(E2) equals train(E1 + E2) bitwise.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "swapvae/adam.hpp"
#include "swapvae/baselines.hpp"
#include "swapvae/checkpoint.hpp"
#include "swapvae/dataset.hpp"
#include "swapvae/model.hpp"
#include "swapvae/rng.hpp"

namespace swapvae {

namespace rng_tag {
inline constexpr uint64_t epoch_perm = 21;
inline constexpr uint64_t augment = 22;
inline constexpr uint64_t reparam = 23;
inline constexpr uint64_t model_init = 24;
}  // namespace rng_tag

struct TrainConfig {
  double lr = 1e-4;
  size_t batch_size = 256;
  uint64_t iterations = 0;
  uint64_t seed = 0;
  AugmentationConfig augmentation;

  void validate() const {
    if (!(lr >= 0.0)) throw config_error("lr must be >= 0");
    if (batch_size < 2) throw config_error("batch_size must be >= 2 (batch norm)");
    augmentation.validate();
  }
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean total loss per epoch touched by this call
  uint64_t iterations_run = 0;
  bool diverged = false;
};

// Full batches drawn from a per-epoch derived permutation of the training
// rows. Epochs are global: iteration i lives in epoch i / iters_per_epoch
// regardless of how training was segmented across resumes.
class BatchSchedule {
 public:
  BatchSchedule(uint64_t seed, std::vector<size_t> rows, size_t batch_size)
      : seed_(seed), rows_(std::move(rows)) {
    if (rows_.size() < 2) throw data_error("training needs at least 2 rows");
    batch_ = std::min(batch_size, rows_.size());
    if (batch_ < 2) throw config_error("effective batch must be >= 2");
  }

  size_t batch_size() const { return batch_; }
  size_t iters_per_epoch() const { return rows_.size() / batch_; }

  std::vector<size_t> rows_for(uint64_t iter) const {
    const uint64_t epoch = iter / iters_per_epoch();
    const size_t slot = static_cast<size_t>(iter % iters_per_epoch());
    if (!have_perm_ || epoch != perm_epoch_) {
      perm_ = rows_;
      Rng rng = Rng::derive(seed_, rng_tag::epoch_perm, epoch);
      rng.shuffle(perm_);
      perm_epoch_ = epoch;
      have_perm_ = true;
    }
    return std::vector<size_t>(perm_.begin() + static_cast<long>(slot * batch_),
                               perm_.begin() + static_cast<long>((slot + 1) * batch_));
  }

 private:
  uint64_t seed_;
  std::vector<size_t> rows_;
  size_t batch_ = 0;
  mutable std::vector<size_t> perm_;
  mutable uint64_t perm_epoch_ = 0;
  mutable bool have_perm_ = false;
};

// Shared loop: snapshot, step closure, Adam, divergence rollback. The step
// closure computes the loss for the given rows at the given global iteration
// and leaves gradients in the registered params.
class TrainDriver {
 public:
  TrainDriver() = default;
  TrainDriver(StateDict state, std::vector<Param*> params, AdamConfig adam_cfg)
      : state_(std::move(state)), params_(std::move(params)), opt_(params_, adam_cfg) {}

  uint64_t iteration() const { return iteration_; }
  Adam& optimizer() { return opt_; }

  TrainResult run(uint64_t n_iterations, const BatchSchedule& schedule,
                  const std::function<double(const std::vector<size_t>&, uint64_t)>& step_fn) {
    TrainResult result;
    const size_t ipe = schedule.iters_per_epoch();
    uint64_t cur_epoch = iteration_ / ipe;
    double epoch_sum = 0.0;
    uint64_t epoch_count = 0;
    auto flush_epoch = [&]() {
      if (epoch_count > 0) result.epoch_loss.push_back(epoch_sum / double(epoch_count));
      epoch_sum = 0.0;
      epoch_count = 0;
    };
    for (uint64_t step = 0; step < n_iterations; ++step) {
      const uint64_t epoch = iteration_ / ipe;
      if (epoch != cur_epoch) {
        flush_epoch();
        cur_epoch = epoch;
      }
      snapshot();
      double total = 0.0;
      bool ok = true;
      try {
        zero_grads(params_);
        total = step_fn(schedule.rows_for(iteration_), iteration_);
        if (!std::isfinite(total)) ok = false;
        if (ok) opt_.step();
      } catch (const numeric_error&) {
        ok = false;
      }
      if (!ok) {  // roll back to the last finite state and stop
        restore();
        result.diverged = true;
        break;
      }
      ++iteration_;
      ++result.iterations_run;
      epoch_sum += total;
      ++epoch_count;
    }
    flush_epoch();
    return result;
  }

  // Model state plus optimizer moments and counters, one checkpoint.
  void save(const std::string& prefix, const nlohmann::json& model_config) {
    StateDict sd = state_;
    for (size_t i = 0; i < params_.size(); ++i) {
      sd.emplace_back("adam.m." + params_[i]->name, &opt_.moments_m()[i]);
      sd.emplace_back("adam.v." + params_[i]->name, &opt_.moments_v()[i]);
    }
    std::map<std::string, std::string> counters;
    counters["iteration"] = std::to_string(iteration_);
    counters["adam_t"] = std::to_string(opt_.t());
    save_checkpoint(prefix, sd, counters, model_config);
  }

  nlohmann::json load(const std::string& prefix) {
    Checkpoint ck = load_checkpoint(prefix);
    StateDict sd = state_;
    for (size_t i = 0; i < params_.size(); ++i) {
      sd.emplace_back("adam.m." + params_[i]->name, &opt_.moments_m()[i]);
      sd.emplace_back("adam.v." + params_[i]->name, &opt_.moments_v()[i]);
    }
    restore_state(ck, sd);
    iteration_ = counter_u64(ck, "iteration");
    opt_.set_t(counter_u64(ck, "adam_t"));
    return ck.model_config;
  }

 private:
  // Only state the step closure can mutate needs a rollback copy. Parameters
  // and Adam moments change in opt_.step(), which runs after the finite check,
  // so on the rollback path they still hold their pre-iteration values; what
  // the forward pass does mutate is the normalization layers' running
  // statistics, registered in state_ but absent from params_.
  void snapshot() {
    if (!rollback_ready_) {
      rollback_ready_ = true;
      for (size_t i = 0; i < state_.size(); ++i) {
        bool is_param = false;
        for (const Param* p : params_)
          if (&p->value == state_[i].second) is_param = true;
        if (!is_param) rollback_.push_back(i);
      }
      saved_state_.resize(rollback_.size());
    }
    for (size_t k = 0; k < rollback_.size(); ++k) saved_state_[k] = *state_[rollback_[k]].second;
  }

  void restore() {
    for (size_t k = 0; k < rollback_.size(); ++k) *state_[rollback_[k]].second = saved_state_[k];
  }

  StateDict state_;
  std::vector<Param*> params_;
  Adam opt_;
  uint64_t iteration_ = 0;
  std::vector<size_t> rollback_;
  std::vector<Matrix> saved_state_;
  bool rollback_ready_ = false;
};

// Draws a block of standard normals in row-major order; the reparameterization
// stream consumes eps1 then eps2 (then content eps when that block is
// stochastic), a fixed order resumability depends on.
inline Matrix draw_normal(Rng& rng, size_t rows, size_t cols) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = rng.normal();
  return m;
}

inline Matrix gather_rows(const Matrix& x, const std::vector<size_t>& rows) {
  Matrix out(rows.size(), x.cols);
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < x.cols; ++j) out(i, j) = x(rows[i], j);
  return out;
}

class SwapVaeTrainer {
 public:
  SwapVaeTrainer(SwapVae* model, TrainConfig cfg, LossWeights weights)
      : model_(model), cfg_(cfg), weights_(weights) {
    cfg_.validate();
    weights_.validate();
    driver_ = TrainDriver(model->state_dict(), model->params(),
                          AdamConfig{cfg_.lr, 0.9, 0.999, 1e-8, 0.0});
  }

  uint64_t iteration() const { return driver_.iteration(); }
  const LossBreakdown& last_breakdown() const { return last_breakdown_; }

  TrainResult train(const BinnedDataset& ds, const std::vector<size_t>& train_rows,
                    uint64_t n_iterations) {
    BatchSchedule schedule(cfg_.seed, train_rows, cfg_.batch_size);
    const size_t b = schedule.batch_size();
    const size_t d = ds.d();
    const auto& mc = model_->config();
    return driver_.run(n_iterations, schedule, [&](const std::vector<size_t>& rows,
                                                   uint64_t iter) {
      Matrix x1(b, d), x2(b, d);
      Rng aug_rng = Rng::derive(cfg_.seed, rng_tag::augment, iter);
      for (size_t i = 0; i < rows.size(); ++i) {
        AugmentedPair pair = augment_pair(ds, rows[i], cfg_.augmentation, aug_rng);
        for (size_t j = 0; j < d; ++j) {
          x1(i, j) = pair.x1(0, j);
          x2(i, j) = pair.x2(0, j);
        }
      }
      Rng eps_rng = Rng::derive(cfg_.seed, rng_tag::reparam, iter);
      Matrix eps1 = draw_normal(eps_rng, b, mc.k_s);
      Matrix eps2 = draw_normal(eps_rng, b, mc.k_s);
      Matrix ceps1(0, 0), ceps2(0, 0);
      if (mc.stochastic_content) {
        ceps1 = draw_normal(eps_rng, b, mc.k_c);
        ceps2 = draw_normal(eps_rng, b, mc.k_c);
      }
      return model_->loss_total(x1, x2, weights_, eps1, eps2, &last_breakdown_, true,
                                mc.stochastic_content ? &ceps1 : nullptr,
                                mc.stochastic_content ? &ceps2 : nullptr);
    });
  }

  void save(const std::string& prefix, nlohmann::json extra = {}) {
    nlohmann::json mc = model_config_json();
    for (auto& [k, v] : extra.items()) mc[k] = v;
    driver_.save(prefix, mc);
  }

  nlohmann::json load(const std::string& prefix) { return driver_.load(prefix); }

  nlohmann::json model_config_json() const {
    const auto& c = model_->config();
    return nlohmann::json{{"kind", "swap"},
                          {"d", c.d},
                          {"k_c", c.k_c},
                          {"k_s", c.k_s},
                          {"hidden", c.hidden},
                          {"stochastic_content", c.stochastic_content},
                          {"variant", variant_name(weights_.variant)},
                          {"alpha", weights_.alpha},
                          {"beta", weights_.beta},
                          {"lr", cfg_.lr},
                          {"batch_size", cfg_.batch_size},
                          {"seed", cfg_.seed},
                          {"drop_prob", cfg_.augmentation.drop_prob},
                          {"jitter_window", cfg_.augmentation.jitter_window},
                          {"enable_spatial", cfg_.augmentation.enable_spatial},
                          {"enable_temporal", cfg_.augmentation.enable_temporal},
                          {"uniform_drop", cfg_.augmentation.uniform_drop}};
  }

 private:
  SwapVae* model_;
  TrainConfig cfg_;
  LossWeights weights_;
  TrainDriver driver_;
  LossBreakdown last_breakdown_;
};

class BetaVaeTrainer {
 public:
  BetaVaeTrainer(BetaVae* model, TrainConfig cfg) : model_(model), cfg_(cfg) {
    cfg_.validate();
    driver_ = TrainDriver(model->state_dict(), model->params(),
                          AdamConfig{cfg_.lr, 0.9, 0.999, 1e-8, 0.0});
  }

  uint64_t iteration() const { return driver_.iteration(); }

  TrainResult train(const BinnedDataset& ds, const std::vector<size_t>& train_rows,
                    uint64_t n_iterations) {
    BatchSchedule schedule(cfg_.seed, train_rows, cfg_.batch_size);
    const size_t b = schedule.batch_size();
    return driver_.run(n_iterations, schedule,
                       [&](const std::vector<size_t>& rows, uint64_t iter) {
                         Matrix x = gather_rows(ds.X, rows);
                         Rng eps_rng = Rng::derive(cfg_.seed, rng_tag::reparam, iter);
                         Matrix eps = draw_normal(eps_rng, b, model_->k());
                         return model_->loss(x, eps);
                       });
  }

  void save(const std::string& prefix, nlohmann::json extra = {}) {
    nlohmann::json mc{{"kind", "beta"},
                      {"d", model_->core().config().d},
                      {"k", model_->k()},
                      {"hidden", model_->core().config().hidden},
                      {"beta", model_->beta()},
                      {"lr", cfg_.lr},
                      {"batch_size", cfg_.batch_size},
                      {"seed", cfg_.seed}};
    for (auto& [k, v] : extra.items()) mc[k] = v;
    driver_.save(prefix, mc);
  }

  nlohmann::json load(const std::string& prefix) { return driver_.load(prefix); }

 private:
  BetaVae* model_;
  TrainConfig cfg_;
  TrainDriver driver_;
};

enum class SupervisedTarget { reach, time };

class SupervisedTrainer {
 public:
  SupervisedTrainer(Supervised* model, TrainConfig cfg, SupervisedTarget target)
      : model_(model), cfg_(cfg), target_(target) {
    cfg_.validate();
    driver_ = TrainDriver(model->state_dict(), model->params(),
                          AdamConfig{cfg_.lr, 0.9, 0.999, 1e-8, 0.0});
  }

  uint64_t iteration() const { return driver_.iteration(); }

  TrainResult train(const BinnedDataset& ds, const std::vector<size_t>& train_rows,
                    uint64_t n_iterations) {
    BatchSchedule schedule(cfg_.seed, train_rows, cfg_.batch_size);
    const std::vector<int>& label_src = target_ == SupervisedTarget::reach ? ds.y_dir : ds.y_time;
    return driver_.run(n_iterations, schedule,
                       [&](const std::vector<size_t>& rows, uint64_t) {
                         Matrix x = gather_rows(ds.X, rows);
                         std::vector<int64_t> y(rows.size());
                         for (size_t i = 0; i < rows.size(); ++i) y[i] = label_src[rows[i]];
                         return model_->loss(x, y);
                       });
  }

  void save(const std::string& prefix, nlohmann::json extra = {}) {
    nlohmann::json mc{{"kind", "supervised"},
                      {"target", target_ == SupervisedTarget::reach ? "reach" : "time"},
                      {"d", model_->d()},
                      {"hidden", model_->hidden()},
                      {"n_classes", model_->n_classes()},
                      {"lr", cfg_.lr},
                      {"batch_size", cfg_.batch_size},
                      {"seed", cfg_.seed}};
    for (auto& [k, v] : extra.items()) mc[k] = v;
    driver_.save(prefix, mc);
  }

  nlohmann::json load(const std::string& prefix) { return driver_.load(prefix); }

 private:
  Supervised* model_;
  TrainConfig cfg_;
  SupervisedTarget target_;
  TrainDriver driver_;
};

}  // namespace swapvae
