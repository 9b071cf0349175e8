// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "porc/numeric/tape.hpp"

namespace porc::nc {

// All ops treat rank-0/1 tensors as a single row. Binary elementwise ops
// broadcast the right operand when it is a scalar, a [1,n] row or a [m,1]
// column. Shape violations raise porc::shape_error naming the op.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

Var tanh(Var a);
/// Exact (erf) GELU.
Var gelu(Var a);
Var log(Var a);
Var exp(Var a);
Var clamp_min(Var a, double lo);

/// Row-wise softmax(a / temperature), max-subtracted.
Var softmax(Var a, double temperature = 1.0);
Var log_softmax(Var a, double temperature = 1.0);
/// Row-wise standardization without affine parameters.
Var layer_norm(Var a, double eps = 1e-5);
/// Row-wise unit-l2 rows. A zero row maps to zero; `zero_rows` counts them.
Var l2_normalize(Var a, std::size_t* zero_rows = nullptr);

/// Scalar sum / mean over every element.
Var sum(Var a);
Var mean(Var a);
/// [m,n] -> [m,1]
Var row_sum(Var a);
/// [m,n] -> [1,n]
Var mean_over_rows(Var a);

Var gather_rows(Var a, const std::vector<std::size_t>& rows);
Var mask_select(Var a, const std::vector<bool>& keep);
/// Stacks row blocks with equal column counts.
Var concat_rows(const std::vector<Var>& parts);
/// Copy of the value with no gradient path.
Var detach(Var a);

}  // namespace porc::nc
