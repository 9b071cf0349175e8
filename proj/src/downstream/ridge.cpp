// SPDX-License-Identifier: Apache-2.0
#include "porc/downstream/ridge.hpp"

#include <algorithm>
#include <cmath>

#include "porc/error.hpp"

namespace porc::ds {

using nc::Tensor;

std::vector<double> cholesky_solve(std::vector<double> a, std::vector<double> b, std::size_t n, std::size_t m,
                                   double rel_tol) {
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a[i * n + i]));
  const double floor = rel_tol * (max_diag > 0.0 ? max_diag : 1.0);
  // In-place lower factor L with A = L L^T.
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > floor)) throw numeric_error("cholesky: system is singular or not positive definite at pivot " + std::to_string(j));
    const double l = std::sqrt(d);
    a[j * n + j] = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / l;
    }
  }
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = b[i * m + c];
      for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * b[k * m + c];
      b[i * m + c] = s / a[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = b[i * m + c];
      for (std::size_t k = i + 1; k < n; ++k) s -= a[k * n + i] * b[k * m + c];
      b[i * m + c] = s / a[i * n + i];
    }
  }
  return b;
}

RidgeModel ridge_fit(const Tensor& x, const Tensor& y, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw data_error("ridge: lambda must be finite and >= 0");
  const std::size_t n = x.rows(), d = x.cols(), G = y.cols();
  if (y.rows() != n) throw shape_error("ridge: " + std::to_string(n) + " feature rows vs " + std::to_string(y.rows()) + " target rows");
  if (G == 0) throw data_error("ridge: need at least one target column");
  if (n == 0) throw data_error("ridge: no samples");

  std::vector<double> xm(d, 0.0), ym(G, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) xm[k] += x.at(i, k) / static_cast<double>(n);
    for (std::size_t g = 0; g < G; ++g) ym[g] += y.at(i, g) / static_cast<double>(n);
  }
  std::vector<double> a(d * d, 0.0), b(d * G, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < d; ++p) {
      const double xp = x.at(i, p) - xm[p];
      for (std::size_t q = 0; q < d; ++q) a[p * d + q] += xp * (x.at(i, q) - xm[q]);
      for (std::size_t g = 0; g < G; ++g) b[p * G + g] += xp * (y.at(i, g) - ym[g]);
    }
  }
  for (std::size_t p = 0; p < d; ++p) a[p * d + p] += lambda;

  std::vector<double> beta;
  try {
    beta = cholesky_solve(std::move(a), std::move(b), d, G);
  } catch (const numeric_error&) {
    if (lambda == 0.0) throw numeric_error("ridge: singular system at lambda=0; set lambda > 0");
    throw;
  }
  RidgeModel m;
  m.lambda = lambda;
  std::vector<double> icpt(ym);
  for (std::size_t g = 0; g < G; ++g)
    for (std::size_t p = 0; p < d; ++p) icpt[g] -= xm[p] * beta[p * G + g];
  m.coef = Tensor({d, G}, std::move(beta));
  m.intercept = Tensor({1, G}, std::move(icpt));
  return m;
}

Tensor ridge_predict(const RidgeModel& m, const Tensor& x) {
  const std::size_t n = x.rows(), d = m.coef.rows(), G = m.coef.cols();
  if (x.cols() != d) throw shape_error("ridge: feature dim " + std::to_string(x.cols()) + " vs model " + std::to_string(d));
  std::vector<double> out(n * G);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t g = 0; g < G; ++g) {
      double s = m.intercept[g];
      for (std::size_t p = 0; p < d; ++p) s += x.at(i, p) * m.coef.at(p, g);
      out[i * G + g] = s;
    }
  return Tensor({n, G}, std::move(out));
}

}  // namespace porc::ds
