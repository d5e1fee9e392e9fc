#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "swapvae/matrix.hpp"
#include "swapvae/rng.hpp"

using swapvae::Matrix;
using swapvae::Rng;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.normal();
  return m;
}

// Naive triple-loop product as the oracle for the BLAS path.
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

void check_close(const Matrix& a, const Matrix& b, double tol = 1e-12) {
  REQUIRE(a.rows == b.rows);
  REQUIRE(a.cols == b.cols);
  for (std::size_t i = 0; i < a.data.size(); ++i)
    REQUIRE(a.data[i] == Catch::Approx(b.data[i]).margin(tol));
}

}  // namespace

TEST_CASE("matmul matches the naive oracle on random shapes") {
  Rng rng(1);
  for (auto [m, k, n] : {std::tuple<int, int, int>{1, 1, 1},
                         {3, 4, 5},
                         {7, 2, 9},
                         {16, 33, 8},
                         {1, 50, 3}}) {
    Matrix a = random_matrix(m, k, rng);
    Matrix b = random_matrix(k, n, rng);
    check_close(swapvae::matmul(a, b), naive_matmul(a, b));
  }
}

TEST_CASE("transposed products match explicit transposition") {
  Rng rng(2);
  Matrix a = random_matrix(6, 4, rng);
  Matrix b = random_matrix(5, 4, rng);
  check_close(swapvae::matmul_nt(a, b), naive_matmul(a, transpose(b)));

  Matrix c = random_matrix(6, 4, rng);
  Matrix d = random_matrix(6, 3, rng);
  check_close(swapvae::matmul_tn(c, d), naive_matmul(transpose(c), d));
}

TEST_CASE("gemm accumulates with alpha and beta") {
  Rng rng(3);
  Matrix a = random_matrix(4, 5, rng);
  Matrix b = random_matrix(5, 2, rng);
  Matrix c = random_matrix(4, 2, rng);

  Matrix expected = c;
  Matrix ab = naive_matmul(a, b);
  for (std::size_t i = 0; i < expected.data.size(); ++i)
    expected.data[i] = 0.5 * ab.data[i] + 2.0 * expected.data[i];

  swapvae::gemm(false, false, 0.5, a, b, 2.0, c);
  check_close(c, expected);
}

TEST_CASE("identity multiplication is the identity") {
  Matrix eye(3, 3);
  for (int i = 0; i < 3; ++i) eye(i, i) = 1.0;
  Matrix x(2, 3);
  x.data = {3.0, -1.0, 2.5, 0.0, 7.0, -4.0};
  check_close(swapvae::matmul(x, eye), x);
}

TEST_CASE("shape mismatches throw") {
  Matrix a(2, 3), b(4, 5), c(2, 5);
  REQUIRE_THROWS_AS(swapvae::matmul(a, b), swapvae::shape_error);
  REQUIRE_THROWS_AS(swapvae::gemm(false, false, 1.0, a, b, 0.0, c), swapvae::shape_error);
}
