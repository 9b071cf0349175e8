// SPDX-License-Identifier: Apache-2.0
#include "porc/numeric/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "porc/error.hpp"

namespace porc::nc {
namespace {

// Neumaier compensated summation for reductions.
struct CompensatedSum {
  double sum = 0.0, comp = 0.0;
  void add(double v) {
    const double t = sum + v;
    comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw shape_error(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) + " do not conform");
}

Tape& tape_of(Var a, Var b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape) throw data_error(std::string(op) + ": operands on different tapes");
  return *a.tape;
}

enum class Bcast { same, row, col, scalar };

Bcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (b.size() == 1) return Bcast::scalar;
  if (a.shape() == b.shape() || (a.rows() == b.rows() && a.cols() == b.cols() && a.size() == b.size())) {
    return Bcast::same;
  }
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::col;
  shape_fail(op, a.shape(), b.shape());
}

std::size_t b_index(Bcast k, std::size_t r, std::size_t c, std::size_t cols) {
  switch (k) {
    case Bcast::same: return r * cols + c;
    case Bcast::row: return c;
    case Bcast::col: return r;
    case Bcast::scalar: return 0;
  }
  return 0;
}

// Shared driver for add / sub / mul.
template <class Fwd, class DA, class DB>
Var binary(const char* op, Var av, Var bv, Fwd fwd, DA da, DB db) {
  Tape& tape = tape_of(av, bv, op);
  const Tensor& a = av.value();
  const Tensor& b = bv.value();
  const Bcast kind = broadcast_kind(op, a, b);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = fwd(a[r * n + c], b[b_index(kind, r, c, n)]);
  return tape.record(Tensor(a.shape(), std::move(out)), {av.id, bv.id},
                     [kind, m, n, da, db](Tape& t, std::size_t self) {
                       const std::size_t ia = t.input(self, 0), ib = t.input(self, 1);
                       const auto g = t.grad(self);
                       const Tensor& a = t.value(ia);
                       const Tensor& b = t.value(ib);
                       if (t.needs_grad(ia)) {
                         auto ga = t.grad_for(ia);
                         for (std::size_t r = 0; r < m; ++r)
                           for (std::size_t c = 0; c < n; ++c) {
                             const std::size_t i = r * n + c;
                             ga[i] += g[i] * da(a[i], b[b_index(kind, r, c, n)]);
                           }
                       }
                       if (t.needs_grad(ib)) {
                         auto gb = t.grad_for(ib);
                         for (std::size_t r = 0; r < m; ++r)
                           for (std::size_t c = 0; c < n; ++c) {
                             const std::size_t i = r * n + c;
                             const std::size_t j = b_index(kind, r, c, n);
                             gb[j] += g[i] * db(a[i], b[j]);
                           }
                       }
                     });
}

template <class F, class D>
Var unary(Var av, F f, D dfdx) {
  const Tensor& a = av.value();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return av.tape->record(Tensor(a.shape(), std::move(out)), {av.id}, [dfdx](Tape& t, std::size_t self) {
    const std::size_t ia = t.input(self, 0);
    const auto g = t.grad(self);
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    auto ga = t.grad_for(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * dfdx(x[i], y[i]);
  });
}

void check_temperature(const char* op, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw data_error(std::string(op) + ": temperature must be positive, got " + std::to_string(temperature));
  }
}

}  // namespace

Var matmul(Var av, Var bv) {
  Tape& tape = tape_of(av, bv, "matmul");
  const Tensor& a = av.value();
  const Tensor& b = bv.value();
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) shape_fail("matmul", a.shape(), b.shape());
  std::vector<CompensatedSum> acc(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) acc[i * n + j].add(aip * b[p * n + j]);
    }
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m * n; ++i) out[i] = acc[i].value();
  return tape.record(Tensor({m, n}, std::move(out)), {av.id, bv.id}, [m, k, n](Tape& t, std::size_t self) {
    const std::size_t ia = t.input(self, 0), ib = t.input(self, 1);
    const auto g = t.grad(self);
    const Tensor& a = t.value(ia);
    const Tensor& b = t.value(ib);
    if (t.needs_grad(ia)) {
      auto ga = t.grad_for(ia);  // g · bᵀ
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * b[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (t.needs_grad(ib)) {
      auto gb = t.grad_for(ib);  // aᵀ · g
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = a[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

Var transpose(Var av) {
  const Tensor& a = av.value();
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return av.tape->record(Tensor({n, m}, std::move(out)), {av.id}, [m, n](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    auto ga = t.grad_for(t.input(self, 0));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

Var add(Var a, Var b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var gelu(Var a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [inv_sqrt_2pi](double x, double) {
        return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
      });
}

Var log(Var a) {
  for (double v : a.value().data()) {
    if (!(v > 0.0)) throw numeric_error("log: non-positive input " + std::to_string(v));
  }
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var clamp_min(Var a, double lo) {
  return unary(a, [lo](double x) { return std::max(x, lo); }, [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

Var softmax(Var av, double temperature) {
  check_temperature("softmax", temperature);
  const Tensor& a = av.value();
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = &a.data()[r * n];
    double* y = &out[r * n];
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += (y[c] = std::exp((x[c] - mx) / temperature));
    for (std::size_t c = 0; c < n; ++c) y[c] /= z;
  }
  return av.tape->record(Tensor(a.shape(), std::move(out)), {av.id}, [m, n, temperature](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    const Tensor& y = t.value(self);
    auto ga = t.grad_for(t.input(self, 0));
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * y[r * n + c];
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += y[r * n + c] * (g[r * n + c] - dot) / temperature;
    }
  });
}

Var log_softmax(Var av, double temperature) {
  check_temperature("log_softmax", temperature);
  const Tensor& a = av.value();
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = &a.data()[r * n];
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += std::exp((x[c] - mx) / temperature);
    const double lz = std::log(z);
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = (x[c] - mx) / temperature - lz;
  }
  return av.tape->record(Tensor(a.shape(), std::move(out)), {av.id}, [m, n, temperature](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    const Tensor& y = t.value(self);
    auto ga = t.grad_for(t.input(self, 0));
    for (std::size_t r = 0; r < m; ++r) {
      double gs = 0.0;
      for (std::size_t c = 0; c < n; ++c) gs += g[r * n + c];
      for (std::size_t c = 0; c < n; ++c) {
        ga[r * n + c] += (g[r * n + c] - std::exp(y[r * n + c]) * gs) / temperature;
      }
    }
  });
}

Var layer_norm(Var av, double eps) {
  const Tensor& a = av.value();
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  std::vector<double> inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = &a.data()[r * n];
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += x[c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (x[c] - mu) * (x[c] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = (x[c] - mu) * inv_std[r];
  }
  return av.tape->record(Tensor(a.shape(), std::move(out)), {av.id},
                         [m, n, inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
                           const auto g = t.grad(self);
                           const Tensor& y = t.value(self);
                           auto ga = t.grad_for(t.input(self, 0));
                           const double dn = static_cast<double>(n);
                           for (std::size_t r = 0; r < m; ++r) {
                             double gsum = 0.0, gy = 0.0;
                             for (std::size_t c = 0; c < n; ++c) {
                               gsum += g[r * n + c];
                               gy += g[r * n + c] * y[r * n + c];
                             }
                             for (std::size_t c = 0; c < n; ++c) {
                               ga[r * n + c] += inv_std[r] * (g[r * n + c] - gsum / dn - y[r * n + c] * gy / dn);
                             }
                           }
                         });
}

Var l2_normalize(Var av, std::size_t* zero_rows) {
  const Tensor& a = av.value();
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size(), 0.0);
  std::vector<double> norms(m, 0.0);
  std::size_t zeros = 0;
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += a[r * n + c] * a[r * n + c];
    norms[r] = std::sqrt(s);
    if (norms[r] == 0.0) {
      ++zeros;
      continue;
    }
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = a[r * n + c] / norms[r];
  }
  if (zero_rows != nullptr) *zero_rows = zeros;
  return av.tape->record(Tensor(a.shape(), std::move(out)), {av.id},
                         [m, n, norms = std::move(norms)](Tape& t, std::size_t self) {
                           const auto g = t.grad(self);
                           const Tensor& y = t.value(self);
                           auto ga = t.grad_for(t.input(self, 0));
                           for (std::size_t r = 0; r < m; ++r) {
                             if (norms[r] == 0.0) continue;
                             double gy = 0.0;
                             for (std::size_t c = 0; c < n; ++c) gy += g[r * n + c] * y[r * n + c];
                             for (std::size_t c = 0; c < n; ++c) {
                               ga[r * n + c] += (g[r * n + c] - y[r * n + c] * gy) / norms[r];
                             }
                           }
                         });
}

Var sum(Var av) {
  CompensatedSum s;
  for (double v : av.value().data()) s.add(v);
  return av.tape->record(Tensor::scalar(s.value()), {av.id}, [](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad_for(t.input(self, 0))) v += g;
  });
}

Var mean(Var av) {
  const std::size_t n = av.value().size();
  CompensatedSum s;
  for (double v : av.value().data()) s.add(v);
  return av.tape->record(Tensor::scalar(s.value() / static_cast<double>(n)), {av.id}, [n](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0] / static_cast<double>(n);
    for (double& v : t.grad_for(t.input(self, 0))) v += g;
  });
}

Var row_sum(Var av) {
  const Tensor& a = av.value();
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    CompensatedSum s;
    for (std::size_t c = 0; c < n; ++c) s.add(a[r * n + c]);
    out[r] = s.value();
  }
  return av.tape->record(Tensor({m, 1}, std::move(out)), {av.id}, [m, n](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    auto ga = t.grad_for(t.input(self, 0));
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += g[r];
  });
}

Var mean_over_rows(Var av) {
  const Tensor& a = av.value();
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(n, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    CompensatedSum s;
    for (std::size_t r = 0; r < m; ++r) s.add(a[r * n + c]);
    out[c] = s.value() / static_cast<double>(m);
  }
  return av.tape->record(Tensor({1, n}, std::move(out)), {av.id}, [m, n](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    auto ga = t.grad_for(t.input(self, 0));
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += g[c] / static_cast<double>(m);
  });
}

Var gather_rows(Var av, const std::vector<std::size_t>& rows) {
  const Tensor& a = av.value();
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out;
  out.reserve(rows.size() * n);
  for (std::size_t r : rows) {
    if (r >= m) throw shape_error("gather_rows: row " + std::to_string(r) + " out of range for " + shape_str(a.shape()));
    out.insert(out.end(), a.data().begin() + static_cast<std::ptrdiff_t>(r * n),
               a.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
  }
  return av.tape->record(Tensor({rows.size(), n}, std::move(out)), {av.id}, [rows, n](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    auto ga = t.grad_for(t.input(self, 0));
    for (std::size_t k = 0; k < rows.size(); ++k)
      for (std::size_t c = 0; c < n; ++c) ga[rows[k] * n + c] += g[k * n + c];
  });
}

Var mask_select(Var a, const std::vector<bool>& keep) {
  if (keep.size() != a.value().rows()) {
    throw shape_error("mask_select: mask length " + std::to_string(keep.size()) + " vs tensor " +
                      shape_str(a.value().shape()));
  }
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) rows.push_back(i);
  return gather_rows(a, rows);
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw shape_error("concat_rows: no inputs");
  const std::size_t n = parts.front().value().cols();
  std::vector<double> out;
  std::vector<std::size_t> ids, offsets;
  for (const Var& p : parts) {
    if (p.tape != parts.front().tape) throw shape_error("concat_rows: inputs live on different tapes");
    if (p.value().cols() != n) {
      throw shape_error("concat_rows: column mismatch " + shape_str(parts.front().value().shape()) + " vs " +
                        shape_str(p.value().shape()));
    }
    offsets.push_back(out.size());
    out.insert(out.end(), p.value().data().begin(), p.value().data().end());
    ids.push_back(p.id);
  }
  const std::size_t m = out.size() / std::max<std::size_t>(n, 1);
  return parts.front().tape->record(Tensor({m, n}, std::move(out)), ids, [offsets](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      const std::size_t id = t.input(self, k);
      if (!t.needs_grad(id)) continue;
      auto gi = t.grad_for(id);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[offsets[k] + i];
    }
  });
}

Var detach(Var a) { return a.tape->constant(a.value()); }

}  // namespace porc::nc
