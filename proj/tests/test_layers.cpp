#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "swapvae/adam.hpp"
#include "swapvae/gradcheck.hpp"
#include "swapvae/layers.hpp"
#include "swapvae/losses.hpp"
#include "swapvae/rng.hpp"

using swapvae::Adam;
using swapvae::AdamConfig;
using swapvae::BatchNorm;
using swapvae::Linear;
using swapvae::Matrix;
using swapvae::Param;
using swapvae::Rng;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data) v = scale * rng.normal();
  return m;
}

}  // namespace

TEST_CASE("linear forward identity and hand-computed case") {
  Linear ident("l", 2, 2);
  ident.weight.value.data = {1.0, 0.0, 0.0, 1.0};
  Matrix x(1, 2);
  x.data = {3.0, -1.0};
  Matrix y = ident.forward(x);
  REQUIRE(y.data[0] == 3.0);
  REQUIRE(y.data[1] == -1.0);

  Linear l("l", 2, 1);
  l.weight.value.data = {1.0, 1.0};
  l.bias.value.data = {0.5};
  Matrix x2(1, 2);
  x2.data = {2.0, 3.0};
  REQUIRE(l.forward(x2).data[0] == Catch::Approx(5.5));

  Matrix bad(1, 3);
  REQUIRE_THROWS_AS(l.forward(bad), swapvae::shape_error);
}

TEST_CASE("linear backward zero upstream and scalar chain rule") {
  Linear l("l", 1, 1);
  l.weight.value.data = {4.0};
  Linear::Ctx ctx;
  Matrix x(1, 1);
  x.data = {3.0};
  l.forward(x, &ctx);

  Matrix zero(1, 1);
  Matrix dx = l.backward(ctx, zero);
  REQUIRE(l.weight.grad.data[0] == 0.0);
  REQUIRE(l.bias.grad.data[0] == 0.0);
  REQUIRE(dx.data[0] == 0.0);

  Matrix g(1, 1);
  g.data = {2.0};
  dx = l.backward(ctx, g);
  REQUIRE(l.weight.grad.data[0] == Catch::Approx(2.0 * 3.0));  // g * a
  REQUIRE(l.bias.grad.data[0] == Catch::Approx(2.0));
  REQUIRE(dx.data[0] == Catch::Approx(2.0 * 4.0));  // g * w
}

TEST_CASE("batch norm train mode standardizes columns") {
  Rng rng(4);
  BatchNorm bn("bn", 3);
  Matrix x = random_matrix(64, 3, rng, 2.5);
  for (std::size_t i = 0; i < x.rows; ++i) x(i, 1) += 7.0;  // offset one column
  Matrix y = bn.forward(x, true);
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < y.rows; ++i) mean += y(i, j);
    mean /= static_cast<double>(y.rows);
    for (std::size_t i = 0; i < y.rows; ++i) var += (y(i, j) - mean) * (y(i, j) - mean);
    var /= static_cast<double>(y.rows);
    REQUIRE(std::abs(mean) < 1e-9);
    // output variance is var/(var+eps) of a unit-variance target
    REQUIRE(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("batch norm running statistics follow the momentum update") {
  BatchNorm bn("bn", 2);
  Matrix x(2, 2);
  x.data = {1.0, 2.0, 3.0, 6.0};  // col means (2,4), biased vars (1,4), unbiased (2,8)
  bn.forward(x, true);
  REQUIRE(bn.running_mean.data[0] == Catch::Approx(0.2));
  REQUIRE(bn.running_mean.data[1] == Catch::Approx(0.4));
  REQUIRE(bn.running_var.data[0] == Catch::Approx(0.9 * 1.0 + 0.1 * 2.0));
  REQUIRE(bn.running_var.data[1] == Catch::Approx(0.9 * 1.0 + 0.1 * 8.0));
}

TEST_CASE("batch norm eval mode standardizes by running buffers") {
  BatchNorm bn("bn", 2);  // fresh buffers: mean 0, var 1
  Matrix x(1, 2);
  x.data = {2.0, -3.0};
  Matrix y = bn.forward(x, false);
  const double scale = 1.0 / std::sqrt(1.0 + bn.eps);
  REQUIRE(y.data[0] == Catch::Approx(2.0 * scale));
  REQUIRE(y.data[1] == Catch::Approx(-3.0 * scale));

  Matrix one(1, 2);
  REQUIRE_THROWS_AS(bn.forward(one, true), swapvae::config_error);
}

TEST_CASE("relu and softplus match their closed forms") {
  Matrix x(1, 4);
  x.data = {0.0, 25.0, -1.5, 19.0};
  Matrix sp = swapvae::softplus_forward(x);
  REQUIRE(sp.data[0] == Catch::Approx(std::log(2.0)));
  REQUIRE(sp.data[1] == 25.0);  // threshold passthrough
  REQUIRE(sp.data[2] == Catch::Approx(std::log1p(std::exp(-1.5))));
  REQUIRE(sp.data[2] > 0.0);

  // continuity at the threshold
  Matrix lo(1, 1), hi(1, 1);
  lo.data = {20.0 - 1e-10};
  hi.data = {20.0 + 1e-10};
  REQUIRE(std::abs(swapvae::softplus_forward(lo).data[0] -
                   swapvae::softplus_forward(hi).data[0]) < 1e-8);

  swapvae::ReluCtx rctx;
  Matrix r = swapvae::relu_forward(x, &rctx);
  REQUIRE(r.data[0] == 0.0);
  REQUIRE(r.data[2] == 0.0);
  REQUIRE(r.data[3] == 19.0);
  Matrix dy(1, 4, 1.0);
  Matrix dx = swapvae::relu_backward(rctx, dy);
  REQUIRE(dx.data[1] == 1.0);  // positive input passes upstream
  REQUIRE(dx.data[2] == 0.0);  // negative input blocks it
}

TEST_CASE("adam zero-gradient identity and hand-evaluated first step") {
  Param p("p", 1, 1);
  p.value.data = {1.0};
  Adam opt({&p}, AdamConfig{.lr = 0.1});
  p.grad.data = {0.0};
  opt.step();
  REQUIRE(p.value.data[0] == 1.0);

  Param q("q", 1, 1);
  q.value.data = {1.0};
  Adam opt2({&q}, AdamConfig{.lr = 0.1});
  q.grad.data = {1.0};
  opt2.step();
  // bias-corrected mhat/sqrt(vhat) = 1, so the step is lr/(1 + eps_opt)
  REQUIRE(q.value.data[0] == Catch::Approx(1.0 - 0.1 / (1.0 + 1e-8)).margin(1e-14));

  Param r("r", 1, 1);
  r.value.data = {2.0};
  Adam opt3({&r}, AdamConfig{.lr = 0.1, .weight_decay = 0.01});
  r.grad.data = {1.0};
  opt3.step();
  // decoupled decay subtracts lr * wd * prev on top of the Adam step
  REQUIRE(r.value.data[0] ==
          Catch::Approx(2.0 - 0.1 / (1.0 + 1e-8) - 0.1 * 0.01 * 2.0).margin(1e-14));

  Param s("s", 1, 1);
  Adam opt4({&s}, AdamConfig{});
  s.grad.data = {std::nan("")};
  REQUIRE_THROWS_AS(opt4.step(), swapvae::numeric_error);
}

TEST_CASE("adam trajectories are bitwise deterministic") {
  auto run = [] {
    Rng rng(8);
    Param p("p", 4, 4);
    swapvae::glorot_init(p, 4, 4, rng);
    Adam opt({&p}, AdamConfig{.lr = 0.01, .weight_decay = 1e-4});
    for (int i = 0; i < 50; ++i) {
      for (std::size_t j = 0; j < p.size(); ++j) p.grad.data[j] = rng.normal();
      opt.step();
    }
    return p.value.data;
  };
  REQUIRE(run() == run());
}

TEST_CASE("gradcheck verifies a composite net and flags corruption") {
  Rng rng(21);
  Linear l1("l1", 3, 4);
  BatchNorm bn("bn", 4);
  Linear l2("l2", 4, 2);
  l1.init(rng);
  l2.init(rng);

  Matrix x = random_matrix(5, 3, rng);
  Matrix target(5, 2);
  for (double& v : target.data) v = static_cast<double>(rng.poisson(2.0));

  std::vector<Param*> params = {&l1.weight, &l1.bias, &bn.gamma, &bn.beta, &l2.weight, &l2.bias};

  auto loss_and_grad = [&]() {
    swapvae::zero_grads(params);
    Linear::Ctx c1, c2;
    BatchNorm::Ctx cb;
    swapvae::ReluCtx cr;
    swapvae::SoftplusCtx cs;
    Matrix h = l1.forward(x, &c1);
    // freeze running buffers so repeated closure calls see identical statistics
    auto rm = bn.running_mean;
    auto rv = bn.running_var;
    h = bn.forward(h, true, &cb);
    bn.running_mean = rm;
    bn.running_var = rv;
    h = swapvae::relu_forward(h, &cr);
    h = l2.forward(h, &c2);
    Matrix lam = swapvae::softplus_forward(h, &cs);
    Matrix dlam;
    const double loss = swapvae::poisson_nll(target, lam, &dlam);
    Matrix d = swapvae::softplus_backward(cs, dlam);
    d = l2.backward(c2, d);
    d = swapvae::relu_backward(cr, d);
    d = bn.backward(cb, d);
    l1.backward(c1, d);
    return loss;
  };

  auto report = swapvae::grad_check(loss_and_grad, params, {.tol = 1e-4, .step = 1e-5});
  INFO("max rel err " << report.max_rel_err);
  REQUIRE(report.pass());
  REQUIRE(report.coords_checked == 12 + 4 + 4 + 4 + 8 + 2);

  // doubling every gradient must be caught
  auto corrupted = [&]() {
    const double loss = loss_and_grad();
    for (Param* p : params)
      for (double& g : p->grad.data) g *= 2.0;
    return loss;
  };
  auto bad = swapvae::grad_check(corrupted, params, {.tol = 1e-4, .step = 1e-5});
  REQUIRE_FALSE(bad.pass());
}

TEST_CASE("gradcheck coordinate sampling bounds the work") {
  Param p("p", 10, 10);
  Matrix target(10, 10, 1.0);
  auto loss = [&]() {
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = p.value.data[i] - target.data[i];
      p.grad.data[i] = 2.0 * d;
      total += d * d;
    }
    return total;
  };
  auto report = swapvae::grad_check(loss, {&p}, {.max_coords_per_param = 25, .seed = 5});
  REQUIRE(report.coords_checked == 25);
  REQUIRE(report.pass());
}
