#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "swapvae/synthdata.hpp"

using swapvae::FlowGenerator;
using swapvae::GaussianMixtureSpec;
using swapvae::Matrix;
using swapvae::Rng;

namespace {
constexpr double kPi = std::numbers::pi;

// Flow with all coupling parameters zeroed: the coupling stage becomes the
// identity, so rates reduce to softplus(gain * lift + offset).
FlowGenerator identity_flow(double gain = 1.0, double offset = 0.0) {
  FlowGenerator gen = swapvae::make_flow_generator(3, 4, gain, offset);
  for (auto& blk : gen.blocks) {
    blk.w1.fill(0.0);
    blk.b1.fill(0.0);
    blk.ws.fill(0.0);
    blk.bs.fill(0.0);
    blk.wt.fill(0.0);
    blk.bt.fill(0.0);
  }
  return gen;
}

double softplus_ref(double x) { return x > 20.0 ? x : std::log1p(std::exp(x)); }
}  // namespace

TEST_CASE("mixture component means and variances follow the angle formulas") {
  GaussianMixtureSpec spec;
  spec.variance_floor = 1e-3;

  spec.u[0] = kPi / 2.0;
  CHECK(spec.mean(0)[0] == Catch::Approx(5.0).margin(1e-12));
  CHECK(spec.mean(0)[1] == Catch::Approx(0.0).margin(1e-12));
  CHECK(spec.var(0)[0] == Catch::Approx(0.3).margin(1e-12));
  CHECK(spec.var(0)[1] == Catch::Approx(0.3).margin(1e-12));

  spec.u[1] = kPi / 4.0;
  CHECK(spec.mean(1)[0] == Catch::Approx(3.5355).margin(5e-4));
  CHECK(spec.mean(1)[1] == Catch::Approx(3.5355).margin(5e-4));
  CHECK(spec.var(1)[0] == Catch::Approx(0.3879).margin(5e-4));
  CHECK(spec.var(1)[1] == Catch::Approx(0.2121).margin(5e-4));

  spec.u[2] = 0.0;  // raw second variance is 0, clamped to the floor
  CHECK(spec.var(2)[0] == Catch::Approx(0.6).margin(1e-12));
  CHECK(spec.var(2)[1] == Catch::Approx(1e-3).margin(1e-15));
}

TEST_CASE("sampled mixture spec keeps each angle in its quadrant interval") {
  for (uint64_t seed : {1, 2, 3, 4, 5, 99}) {
    Rng rng(seed);
    GaussianMixtureSpec spec = swapvae::sample_mixture_spec(rng);
    for (int i = 0; i < 4; ++i) {
      CHECK(spec.u[i] >= double(i) * kPi / 2.0);
      CHECK(spec.u[i] <= double(i + 1) * kPi / 2.0);
      CHECK(spec.var(i)[0] >= spec.variance_floor);
      CHECK(spec.var(i)[1] >= spec.variance_floor);
    }
  }
  Rng rng(1);
  CHECK_THROWS_AS(swapvae::sample_mixture_spec(rng, 0.0), swapvae::config_error);
}

TEST_CASE("clockwise ordering sorts by decreasing angle about the origin") {
  Matrix pts(4, 2);
  const double degs[4] = {80.0, 100.0, 60.0, 40.0};
  for (int i = 0; i < 4; ++i) {
    const double a = degs[i] * kPi / 180.0;
    pts(i, 0) = std::cos(a);
    pts(i, 1) = std::sin(a);
  }
  swapvae::order_clockwise(pts);
  const double want[4] = {100.0, 80.0, 60.0, 40.0};
  for (int i = 0; i < 4; ++i) {
    const double got = std::atan2(pts(i, 1), pts(i, 0)) * 180.0 / kPi;
    CHECK(got == Catch::Approx(want[i]).margin(1e-9));
  }
}

TEST_CASE("sampled sequences are ordered and track component statistics") {
  Rng rng(7);
  GaussianMixtureSpec spec = swapvae::sample_mixture_spec(rng);

  for (int rep = 0; rep < 50; ++rep) {
    auto seq = swapvae::sample_sequence(spec, rep % 4, rng);
    CHECK(seq.cluster_id == rep % 4);
    CHECK(seq.y_s == std::array<int, 4>{0, 1, 2, 3});
    for (int p = 0; p + 1 < 4; ++p) {
      const double a0 = std::atan2(seq.points(p, 1), seq.points(p, 0));
      const double a1 = std::atan2(seq.points(p + 1, 1), seq.points(p + 1, 0));
      CHECK(a0 >= a1);
    }
  }
  CHECK_THROWS_AS(swapvae::sample_sequence(spec, 4, rng), swapvae::config_error);

  // Monte Carlo: sample mean of many draws lands within 3 sigma of the
  // component mean on both coordinates.
  const int cluster = 1;
  const std::size_t n = 20000;
  double sum0 = 0.0, sum1 = 0.0;
  for (std::size_t i = 0; i < n / 4; ++i) {
    auto seq = swapvae::sample_sequence(spec, cluster, rng);
    for (int p = 0; p < 4; ++p) {
      sum0 += seq.points(p, 0);
      sum1 += seq.points(p, 1);
    }
  }
  const auto m = spec.mean(cluster);
  const auto v = spec.var(cluster);
  CHECK(sum0 / double(n) == Catch::Approx(m[0]).margin(3.0 * std::sqrt(v[0] / double(n))));
  CHECK(sum1 / double(n) == Catch::Approx(m[1]).margin(3.0 * std::sqrt(v[1] / double(n))));
}

TEST_CASE("coupling stage round trips to 1e-6") {
  FlowGenerator gen = swapvae::make_flow_generator(11);
  Rng rng(23);
  Matrix v(1000, FlowGenerator::lift_dim);
  for (double& x : v.data) x = rng.normal();
  Matrix fwd = swapvae::flow_coupling(gen, v);
  Matrix back = swapvae::flow_invert(gen, fwd);
  double max_err = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    max_err = std::max(max_err, std::abs(back.data[i] - v.data[i]));
  CHECK(max_err < 1e-6);
}

TEST_CASE("zero coupling parameters reduce the flow to softplus of the lift") {
  FlowGenerator gen = identity_flow(1.0, 0.0);
  Matrix z(1, 2);
  z(0, 0) = 0.4;
  z(0, 1) = -1.3;
  Matrix rate = swapvae::flow_forward(gen, z);
  REQUIRE(rate.cols == 100);
  CHECK(rate(0, 0) == Catch::Approx(softplus_ref(0.4)).margin(1e-12));
  CHECK(rate(0, 1) == Catch::Approx(softplus_ref(-1.3)).margin(1e-12));
  for (std::size_t j = 2; j < 100; ++j)
    CHECK(rate(0, j) == Catch::Approx(softplus_ref(gen.pad[j - 2])).margin(1e-12));
}

TEST_CASE("gain and offset shift the pre-softplus input") {
  FlowGenerator gen = identity_flow(32.0, 12.0);
  Matrix z(1, 2);
  z(0, 0) = 0.25;
  z(0, 1) = 0.0;
  Matrix rate = swapvae::flow_forward(gen, z);
  CHECK(rate(0, 0) == Catch::Approx(softplus_ref(32.0 * 0.25 + 12.0)).margin(1e-9));
  CHECK(rate(0, 1) == Catch::Approx(softplus_ref(12.0)).margin(1e-9));
}

TEST_CASE("flow rates are strictly positive for random generators") {
  for (uint64_t seed : {1, 5, 17}) {
    FlowGenerator gen = swapvae::make_flow_generator(seed);
    Rng rng(seed + 100);
    Matrix z(64, 2);
    for (double& x : z.data) x = 5.0 * rng.normal();
    Matrix rate = swapvae::flow_forward(gen, z);
    for (double r : rate.data) CHECK(r > 0.0);
  }
}

TEST_CASE("generated dataset has paper shape, balance, and valid labels") {
  Rng rng(5);
  GaussianMixtureSpec spec = swapvae::sample_mixture_spec(rng);
  FlowGenerator gen = swapvae::make_flow_generator(5);
  Rng data_rng(31);
  auto synth = swapvae::generate_dataset(spec, gen, 100, data_rng);

  CHECK(synth.ds.n() == 400);
  CHECK(synth.ds.d() == 100);
  CHECK(synth.split.train_rows.size() == 320);
  CHECK(synth.split.test_rows.size() == 80);
  CHECK(synth.ds.l == 4);
  CHECK_NOTHROW(synth.ds.validate());

  std::array<int, 4> per_cluster{};
  for (int y : synth.ds.y_dir) per_cluster[std::size_t(y)]++;
  for (int c = 0; c < 4; ++c) CHECK(per_cluster[std::size_t(c)] == 100);

  for (double r : synth.rates.data) CHECK(r > 0.0);
  for (double x : synth.ds.X.data) {
    CHECK(x >= 0.0);
    CHECK(x == std::floor(x));
  }
  CHECK(synth.latents.rows == 400);
  CHECK(synth.latents.cols == 2);
}

TEST_CASE("generated dataset is reproducible bitwise per seed") {
  Rng rng(5);
  GaussianMixtureSpec spec = swapvae::sample_mixture_spec(rng);
  FlowGenerator gen = swapvae::make_flow_generator(5);
  Rng r1(77), r2(77);
  auto a = swapvae::generate_dataset(spec, gen, 25, r1);
  auto b = swapvae::generate_dataset(spec, gen, 25, r2);
  CHECK(a.ds.X.data == b.ds.X.data);
  CHECK(a.rates.data == b.rates.data);
  CHECK(a.ds.y_dir == b.ds.y_dir);
  CHECK(a.ds.y_time == b.ds.y_time);
  CHECK(a.split.train_rows == b.split.train_rows);
}

TEST_CASE("counts are Poisson around the stored rates") {
  Rng rng(5);
  GaussianMixtureSpec spec = swapvae::sample_mixture_spec(rng);
  FlowGenerator gen = swapvae::make_flow_generator(5, 4, 32.0, 12.0);
  Rng data_rng(31);
  auto synth = swapvae::generate_dataset(spec, gen, 50, data_rng);

  // Total stored count is a Poisson draw with mean = sum of all rates.
  double total_rate = 0.0, total_count = 0.0;
  for (double r : synth.rates.data) total_rate += r;
  for (double x : synth.ds.X.data) total_count += x;
  CHECK(std::abs(total_count - total_rate) < 3.0 * std::sqrt(total_rate));

  // Law of large numbers on one row: resampling the emission 10^4 times
  // brings the per-neuron mean within 3 sigma of the rate.
  Rng emis(123);
  const std::size_t reps = 10000;
  for (std::size_t j : {std::size_t{0}, std::size_t{49}, std::size_t{99}}) {
    const double lam = synth.rates(0, j);
    double s = 0.0;
    for (std::size_t r = 0; r < reps; ++r) s += double(emis.poisson(lam));
    CHECK(s / double(reps) == Catch::Approx(lam).margin(3.0 * std::sqrt(lam / double(reps))));
  }
}
