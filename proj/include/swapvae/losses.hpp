#pragma once

// Loss primitives shared by the models: Poisson reconstruction likelihood,
// Gaussian-to-standard-normal KL, normalized-L2 alignment, and softmax cross
// entropy. Every function returns the batch-mean scalar and optionally fills
// d(loss)/d(input) matrices (overwritten, not accumulated).

#include <cmath>
#include <cstdint>
#include <vector>

#include "swapvae/matrix.hpp"

namespace swapvae {

// sum_j (lam_j - x_j ln lam_j) per row, mean over rows. The x-only ln x! term
// of the Poisson likelihood is dropped as optimization-constant.
inline double poisson_nll(const Matrix& x, const Matrix& lam, Matrix* dlam = nullptr) {
  require_shape(x.rows == lam.rows && x.cols == lam.cols, "poisson_nll inputs");
  if (x.rows == 0) throw numeric_error("poisson_nll on empty batch");
  const double inv_n = 1.0 / static_cast<double>(x.rows);
  if (dlam) *dlam = Matrix(lam.rows, lam.cols);
  double total = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double xi = x.data[i];
    const double li = lam.data[i];
    if (!(li > 0.0)) throw numeric_error("poisson_nll requires strictly positive rates");
    if (xi < 0.0) throw numeric_error("poisson_nll requires nonnegative counts");
    total += li - xi * std::log(li);
    if (dlam) dlam->data[i] = (1.0 - xi / li) * inv_n;
  }
  return total * inv_n;
}

// KL(N(mu, e^logvar) || N(0, I)) = 0.5 sum_j (mu_j^2 + e^lv_j - 1 - lv_j)
// per row, mean over rows. Nonnegative, zero only at the prior.
inline double kl_gaussian(const Matrix& mu, const Matrix& logvar, Matrix* dmu = nullptr,
                          Matrix* dlogvar = nullptr) {
  require_shape(mu.rows == logvar.rows && mu.cols == logvar.cols, "kl_gaussian inputs");
  if (mu.rows == 0) throw numeric_error("kl_gaussian on empty batch");
  const double inv_n = 1.0 / static_cast<double>(mu.rows);
  if (dmu) *dmu = Matrix(mu.rows, mu.cols);
  if (dlogvar) *dlogvar = Matrix(mu.rows, mu.cols);
  double total = 0.0;
  for (std::size_t i = 0; i < mu.data.size(); ++i) {
    const double m = mu.data[i];
    const double lv = logvar.data[i];
    const double ev = std::exp(lv);
    total += 0.5 * (m * m + ev - 1.0 - lv);
    if (dmu) dmu->data[i] = m * inv_n;
    if (dlogvar) dlogvar->data[i] = 0.5 * (ev - 1.0) * inv_n;
  }
  return total * inv_n;
}

// || z1/|z1| - z2/|z2| ||^2 = 2 - 2 cos(z1, z2) per row, mean over rows.
// Gradient of the cosine through the normalization:
//   d/dz1 = -2 (n2 - cos * n1) / |z1|   with n_i the unit rows.
inline double align_loss(const Matrix& zc1, const Matrix& zc2, Matrix* dz1 = nullptr,
                         Matrix* dz2 = nullptr) {
  require_shape(zc1.rows == zc2.rows && zc1.cols == zc2.cols, "align_loss inputs");
  if (zc1.rows == 0) throw numeric_error("align_loss on empty batch");
  const std::size_t n = zc1.rows, k = zc1.cols;
  const double inv_n = 1.0 / static_cast<double>(n);
  if (dz1) *dz1 = Matrix(n, k);
  if (dz2) *dz2 = Matrix(n, k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double n1 = 0.0, n2 = 0.0, dot = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double a = zc1(i, j), b = zc2(i, j);
      n1 += a * a;
      n2 += b * b;
      dot += a * b;
    }
    n1 = std::sqrt(n1);
    n2 = std::sqrt(n2);
    if (n1 == 0.0 || n2 == 0.0)
      throw numeric_error("align_loss requires nonzero content vectors");
    const double cos = dot / (n1 * n2);
    total += 2.0 - 2.0 * cos;
    if (dz1 || dz2) {
      for (std::size_t j = 0; j < k; ++j) {
        const double u1 = zc1(i, j) / n1;  // unit components
        const double u2 = zc2(i, j) / n2;
        if (dz1) (*dz1)(i, j) = -2.0 * (u2 - cos * u1) / n1 * inv_n;
        if (dz2) (*dz2)(i, j) = -2.0 * (u1 - cos * u2) / n2 * inv_n;
      }
    }
  }
  return total * inv_n;
}

// Mean softmax cross entropy over rows; gradient is (softmax - onehot) / n.
inline double softmax_cross_entropy(const Matrix& logits, const std::vector<std::int64_t>& labels,
                                    Matrix* dlogits = nullptr) {
  require_shape(logits.rows == labels.size(), "cross entropy rows vs labels");
  if (logits.rows == 0) throw numeric_error("cross entropy on empty batch");
  const std::size_t n = logits.rows, c = logits.cols;
  const double inv_n = 1.0 / static_cast<double>(n);
  if (dlogits) *dlogits = Matrix(n, c);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw numeric_error("cross entropy label out of range");
    double hi = logits(i, 0);
    for (std::size_t j = 1; j < c; ++j) hi = std::max(hi, logits(i, j));
    double lse = 0.0;
    for (std::size_t j = 0; j < c; ++j) lse += std::exp(logits(i, j) - hi);
    lse = hi + std::log(lse);
    total += lse - logits(i, static_cast<std::size_t>(y));
    if (dlogits) {
      for (std::size_t j = 0; j < c; ++j) {
        const double p = std::exp(logits(i, j) - lse);
        (*dlogits)(i, j) = (p - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) * inv_n;
      }
    }
  }
  return total * inv_n;
}

}  // namespace swapvae
