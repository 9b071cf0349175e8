// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "porc/numeric/tensor.hpp"

namespace porc::ds {

struct RidgeModel {
  nc::Tensor coef;       // [d, G]
  nc::Tensor intercept;  // [1, G]
  double lambda = 0.0;
};

/// Closed-form ridge per target column with an unpenalized intercept.
RidgeModel ridge_fit(const nc::Tensor& features, const nc::Tensor& targets, double lambda);
nc::Tensor ridge_predict(const RidgeModel& model, const nc::Tensor& features);

/// Solves the symmetric positive definite system A x = b (A is n x n row-major, b is n x m).
/// Throws numeric_error when a pivot falls below rel_tol * max diagonal.
std::vector<double> cholesky_solve(std::vector<double> a, std::vector<double> b, std::size_t n, std::size_t m,
                                   double rel_tol = 1e-12);

}  // namespace porc::ds
