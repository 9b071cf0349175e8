// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace porc {

/// Raised for malformed inputs: bad files, schema violations, precondition failures.
class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes that do not conform for the requested op.
class shape_error : public data_error {
 public:
  using data_error::data_error;
};

/// Non-finite values where finite ones are required (NaN loss, NaN gradient).
class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace porc
