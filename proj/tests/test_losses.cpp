#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "swapvae/losses.hpp"
#include "swapvae/rng.hpp"

using swapvae::Matrix;
using swapvae::Rng;

namespace {

// central finite differences of a scalar functional with respect to one matrix
template <typename Fn>
Matrix fd_grad(Matrix& arg, Fn&& f, double h = 1e-6) {
  Matrix g(arg.rows, arg.cols);
  for (std::size_t i = 0; i < arg.data.size(); ++i) {
    const double saved = arg.data[i];
    arg.data[i] = saved + h;
    const double up = f();
    arg.data[i] = saved - h;
    const double down = f();
    arg.data[i] = saved;
    g.data[i] = (up - down) / (2.0 * h);
  }
  return g;
}

void check_close(const Matrix& a, const Matrix& b, double tol = 1e-7) {
  REQUIRE(a.data.size() == b.data.size());
  for (std::size_t i = 0; i < a.data.size(); ++i)
    REQUIRE(a.data[i] == Catch::Approx(b.data[i]).margin(tol));
}

}  // namespace

TEST_CASE("poisson nll closed-form value and stationarity at lam = x") {
  Matrix x(1, 1), lam(1, 1);
  x.data = {2.0};
  lam.data = {1.0};
  REQUIRE(swapvae::poisson_nll(x, lam) == Catch::Approx(1.0));  // 1 - 2 ln 1

  Matrix dlam;
  lam.data = {2.0};
  swapvae::poisson_nll(x, lam, &dlam);
  REQUIRE(dlam.data[0] == Catch::Approx(0.0).margin(1e-15));

  // 1-D scan: lam = x minimizes for fixed x > 0
  x.data = {3.0};
  double best = 1e300, best_lam = -1.0;
  for (double l = 0.05; l <= 8.0; l += 0.05) {
    lam.data = {l};
    const double v = swapvae::poisson_nll(x, lam);
    if (v < best) {
      best = v;
      best_lam = l;
    }
  }
  REQUIRE(best_lam == Catch::Approx(3.0).margin(0.026));

  lam.data = {0.0};
  REQUIRE_THROWS_AS(swapvae::poisson_nll(x, lam), swapvae::numeric_error);
}

TEST_CASE("poisson nll gradient matches finite differences") {
  Rng rng(2);
  Matrix x(4, 3), lam(4, 3);
  for (double& v : x.data) v = static_cast<double>(rng.poisson(3.0));
  for (double& v : lam.data) v = 0.5 + 3.0 * rng.uniform();
  Matrix dlam;
  swapvae::poisson_nll(x, lam, &dlam);
  check_close(dlam, fd_grad(lam, [&] { return swapvae::poisson_nll(x, lam); }));
}

TEST_CASE("gaussian kl closed-form values, positivity, and gradient") {
  Matrix mu(1, 1), lv(1, 1);
  REQUIRE(swapvae::kl_gaussian(mu, lv) == 0.0);  // prior match
  mu.data = {1.0};
  REQUIRE(swapvae::kl_gaussian(mu, lv) == Catch::Approx(0.5));

  Rng rng(3);
  Matrix mu2(5, 4), lv2(5, 4);
  for (double& v : mu2.data) v = rng.normal();
  for (double& v : lv2.data) v = 0.5 * rng.normal();
  REQUIRE(swapvae::kl_gaussian(mu2, lv2) > 0.0);

  Matrix dmu, dlv;
  swapvae::kl_gaussian(mu2, lv2, &dmu, &dlv);
  check_close(dmu, fd_grad(mu2, [&] { return swapvae::kl_gaussian(mu2, lv2); }));
  check_close(dlv, fd_grad(lv2, [&] { return swapvae::kl_gaussian(mu2, lv2); }));
}

TEST_CASE("gaussian kl matches a monte carlo estimate") {
  Rng rng(17);
  for (int trial = 0; trial < 3; ++trial) {
    Matrix mu(1, 2), lv(1, 2);
    for (double& v : mu.data) v = 0.6 * rng.normal();
    for (double& v : lv.data) v = 0.3 * rng.normal();
    const double analytic = swapvae::kl_gaussian(mu, lv);

    const int n = 100000;
    double acc = 0.0;
    for (int s = 0; s < n; ++s) {
      for (std::size_t j = 0; j < 2; ++j) {
        const double sigma = std::exp(0.5 * lv.data[j]);
        const double z = mu.data[j] + sigma * rng.normal();
        const double logq = -0.5 * (lv.data[j] + (z - mu.data[j]) * (z - mu.data[j]) /
                                                     std::exp(lv.data[j]));
        const double logp = -0.5 * z * z;
        acc += logq - logp;  // shared normalization constants cancel
      }
    }
    REQUIRE(analytic == Catch::Approx(acc / n).margin(1e-2));
  }
}

TEST_CASE("align loss trivial geometry") {
  Matrix a(1, 2), b(1, 2);
  a.data = {3.0, 0.0};
  b.data = {5.0, 0.0};  // positive scalar multiple
  REQUIRE(swapvae::align_loss(a, b) == Catch::Approx(0.0).margin(1e-15));

  b.data = {-2.0, 0.0};  // antipodal
  REQUIRE(swapvae::align_loss(a, b) == Catch::Approx(4.0));

  b.data = {0.0, 7.0};  // orthogonal
  REQUIRE(swapvae::align_loss(a, b) == Catch::Approx(2.0));

  b.data = {0.0, 0.0};
  REQUIRE_THROWS_AS(swapvae::align_loss(a, b), swapvae::numeric_error);
}

TEST_CASE("align loss stays in [0,4] and gradient matches finite differences") {
  Rng rng(5);
  Matrix a(6, 4), b(6, 4);
  for (double& v : a.data) v = rng.normal();
  for (double& v : b.data) v = rng.normal();
  const double loss = swapvae::align_loss(a, b);
  REQUIRE(loss >= 0.0);
  REQUIRE(loss <= 4.0);

  Matrix da, db;
  swapvae::align_loss(a, b, &da, &db);
  check_close(da, fd_grad(a, [&] { return swapvae::align_loss(a, b); }));
  check_close(db, fd_grad(b, [&] { return swapvae::align_loss(a, b); }));
}

TEST_CASE("softmax cross entropy value, chance level, and gradient") {
  Matrix logits(1, 2);
  std::vector<std::int64_t> y = {0};
  REQUIRE(swapvae::softmax_cross_entropy(logits, y) == Catch::Approx(std::log(2.0)));

  Rng rng(9);
  Matrix l2(8, 5);
  std::vector<std::int64_t> y2;
  for (double& v : l2.data) v = rng.normal();
  for (int i = 0; i < 8; ++i) y2.push_back(static_cast<std::int64_t>(rng.below(5)));
  Matrix dl;
  swapvae::softmax_cross_entropy(l2, y2, &dl);
  check_close(dl, fd_grad(l2, [&] { return swapvae::softmax_cross_entropy(l2, y2); }));

  std::vector<std::int64_t> bad = {7};
  REQUIRE_THROWS_AS(swapvae::softmax_cross_entropy(logits, bad), swapvae::numeric_error);
}
