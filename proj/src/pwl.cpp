/* Copyright 2026 The intrnn Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "intrnn/pwl.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <queue>
#include <tuple>

#include "intrnn/error.hpp"
#include "intrnn/float_audit.hpp"

namespace intrnn {

double apply_activation(Activation a, double x) {
  float_audit::record(4);
  switch (a) {
    case Activation::kIdentity:
      return x;
    case Activation::kSigmoid:
      return 1.0 / (1.0 + std::exp(-x));
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kExp:
      return std::exp(x);
  }
  return x;
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity:
      return "identity";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kTanh:
      return "tanh";
    case Activation::kExp:
      return "exp";
  }
  return "identity";
}

Activation parse_activation(std::string_view name) {
  for (Activation a :
       {Activation::kIdentity, Activation::kSigmoid, Activation::kTanh, Activation::kExp}) {
    if (activation_name(a) == name) return a;
  }
  throw ValidationError("unknown activation '" + std::string(name) + "'");
}

std::vector<Code> build_lut(const ScalarFunction& f, const QuantParams& in_qp,
                            const QuantParams& out_qp) {
  std::vector<Code> lut(static_cast<std::size_t>(in_qp.quant_max()) + 1);
  for (Code q = 0; q <= in_qp.quant_max(); ++q) {
    lut[q] = quantize(f(dequantize(q, in_qp)), out_qp);
  }
  return lut;
}

KnotSelection select_knots(std::span<const double> knots, std::span<const double> values,
                           int n_pieces) {
  if (n_pieces < 1) throw ValidationError("number of pieces must be >= 1");
  if (knots.size() != values.size()) {
    throw ValidationError("knots and values differ in length");
  }
  if (knots.size() < static_cast<std::size_t>(n_pieces) + 1) {
    throw ValidationError("not enough knots for " + std::to_string(n_pieces) + " pieces");
  }
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (!(knots[i] > knots[i - 1])) throw ValidationError("knots must be strictly increasing");
  }

  const std::size_t n = knots.size();
  std::vector<std::size_t> prev(n), next(n);
  for (std::size_t i = 0; i < n; ++i) {
    prev[i] = i == 0 ? n : i - 1;
    next[i] = i + 1;
  }
  std::vector<bool> removed(n, false);
  std::vector<unsigned> version(n, 0);

  // slope of the piece starting at knot i
  auto slope = [&](std::size_t i) {
    const std::size_t j = next[i];
    return (values[j] - values[i]) / (knots[j] - knots[i]);
  };
  // slope difference across interior knot j
  auto difference = [&](std::size_t j) { return std::abs(slope(prev[j]) - slope(j)); };

  using Entry = std::tuple<double, std::size_t, unsigned>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  for (std::size_t j = 1; j + 1 < n; ++j) heap.emplace(difference(j), j, 0u);

  std::size_t remaining_pieces = n - 1;
  while (remaining_pieces > static_cast<std::size_t>(n_pieces)) {
    const auto [diff, j, ver] = heap.top();
    heap.pop();
    if (removed[j] || ver != version[j]) continue;
    removed[j] = true;
    const std::size_t p = prev[j];
    const std::size_t q = next[j];
    next[p] = q;
    prev[q] = p;
    --remaining_pieces;
    if (p != 0) heap.emplace(difference(p), p, ++version[p]);
    if (q != n - 1) heap.emplace(difference(q), q, ++version[q]);
  }
  float_audit::record(8 * n);

  KnotSelection out;
  for (std::size_t i = 0; i < n; i = next[i]) {
    out.knots.push_back(knots[i]);
    out.values.push_back(values[i]);
    if (i + 1 < n) out.slopes.push_back(slope(i));
  }
  return out;
}

std::size_t PwlTable::locate(Code q) const {
  const auto it = std::upper_bound(knots_q.begin(), knots_q.end(), q);
  if (it == knots_q.begin()) return 0;
  const std::size_t i = static_cast<std::size_t>(it - knots_q.begin()) - 1;
  if (i == pieces() && q != knots_q.back()) return pieces() - 1;
  return i;
}

void PwlTable::validate() const {
  const std::size_t n = slopes.size();
  if (n < 1) throw ValidationError("PWL table needs at least one piece");
  if (knots_q.size() != n + 1 || knots_r.size() != n + 1 || values.size() != n + 1 ||
      slope_fx.size() != n || intercept_fx.size() != n + 1) {
    throw ValidationError("PWL table arrays have inconsistent lengths");
  }
  if (knots_q.front() != 0 || knots_q.back() != in_qp.quant_max()) {
    throw ValidationError("PWL endpoints must be the first and last input codes");
  }
  for (std::size_t i = 1; i < knots_q.size(); ++i) {
    if (knots_q[i] <= knots_q[i - 1]) throw ValidationError("PWL knots not strictly increasing");
  }
}

namespace {

std::int64_t to_q32(double v) {
  constexpr double kLimit = 268435456.0;  // 2^28 code units; anything larger saturates
  return std::llround(std::ldexp(std::clamp(v, -kLimit, kLimit), PwlTable::kFractionBits));
}

}  // namespace

namespace {

Code integer_code(const PwlTable& t, std::size_t piece, Code q) {
  Wide value = t.intercept_fx[piece];
  if (piece < t.pieces()) value += static_cast<Wide>(t.slope_fx[piece]) * (q - t.knots_q[piece]);
  return saturate(rounding_shift_right(value, PwlTable::kFractionBits) + t.out_qp.zero_point,
                  t.out_qp.bitwidth);
}

// Nudges the Q32 intercept of one piece (by whole Q32 units) until every code
// it covers rounds the same way as the quantized real form. Only inputs whose
// value sits within a few 2^-32 of a rounding boundary can disagree.
void reconcile_piece(PwlTable& t, std::size_t piece, Code first, Code last) {
  std::vector<Code> expected;
  expected.reserve(static_cast<std::size_t>(last - first) + 1);
  for (Code q = first; q <= last; ++q) {
    expected.push_back(quantize(eval_pwl_real(dequantize(q, t.in_qp), t), t.out_qp));
  }
  for (int attempt = 0; attempt < 64; ++attempt) {
    int direction = 0;
    for (Code q = first; q <= last; ++q) {
      const Code want = expected[static_cast<std::size_t>(q - first)];
      const Code got = integer_code(t, piece, q);
      if (got == want) continue;
      const int d = got < want ? 1 : -1;
      if (direction != 0 && direction != d) return;  // conflicting near-ties
      direction = d;
    }
    if (direction == 0) return;
    t.intercept_fx[piece] += direction;
  }
}

}  // namespace

void derive_integer_form(PwlTable& t) {
  const std::size_t n = t.slopes.size();
  t.slope_fx.resize(n);
  t.intercept_fx.resize(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    t.slope_fx[i] = to_q32(t.slopes[i] * t.in_qp.scale / t.out_qp.scale);
  }
  for (std::size_t i = 0; i <= n; ++i) t.intercept_fx[i] = to_q32(t.values[i] / t.out_qp.scale);
  float_audit::record(4 * n);
  for (std::size_t i = 0; i < n; ++i) reconcile_piece(t, i, t.knots_q[i], t.knots_q[i + 1] - 1);
  reconcile_piece(t, n, t.knots_q[n], t.knots_q[n]);
}

PwlTable build_pwl(const ScalarFunction& f, const QuantParams& in_qp, const QuantParams& out_qp,
                   int n_pieces) {
  const Code last = in_qp.quant_max();
  if (n_pieces < 1 || n_pieces > last) {
    throw ValidationError("number of pieces must be in [1, " + std::to_string(last) + "]");
  }
  // 16-bit inputs start from every 16th code (plus the last one).
  const Code stride = in_qp.bitwidth > 12 ? Code{1} << (in_qp.bitwidth - 12) : Code{1};
  std::vector<Code> grid;
  for (Code q = 0; q < last; q += stride) grid.push_back(q);
  grid.push_back(last);
  if (static_cast<std::size_t>(n_pieces) + 1 > grid.size()) {
    throw ValidationError("too many pieces for the candidate grid");
  }

  std::vector<double> knots(grid.size()), values(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    knots[i] = dequantize(grid[i], in_qp);
    values[i] = f(knots[i]);
  }
  KnotSelection sel = select_knots(knots, values, n_pieces);

  PwlTable t;
  t.in_qp = in_qp;
  t.out_qp = out_qp;
  t.knots_r = std::move(sel.knots);
  t.values = std::move(sel.values);
  t.slopes = std::move(sel.slopes);
  // knots_r are exact dequantized grid values, so map them back to codes by
  // walking the grid.
  t.knots_q.reserve(t.knots_r.size());
  std::size_t g = 0;
  for (double k : t.knots_r) {
    while (knots[g] != k) ++g;
    t.knots_q.push_back(grid[g]);
  }
  derive_integer_form(t);
  return t;
}

PwlTable build_pwl(Activation a, const QuantParams& in_qp, const QuantParams& out_qp,
                   int n_pieces) {
  PwlTable t = build_pwl([a](double x) { return apply_activation(a, x); }, in_qp, out_qp, n_pieces);
  t.activation = a;
  return t;
}

double eval_pwl_real(double x, const PwlTable& t) {
  float_audit::record(3);
  const std::size_t n = t.pieces();
  if (x == t.knots_r[n]) return t.values[n];
  std::size_t i = 0;
  if (x >= t.knots_r[1]) {
    const auto it = std::upper_bound(t.knots_r.begin(), t.knots_r.end(), x);
    i = std::min<std::size_t>(static_cast<std::size_t>(it - t.knots_r.begin()) - 1, n - 1);
  }
  return t.slopes[i] * (x - t.knots_r[i]) + t.values[i];
}

Code eval_pwl_fakequant(Code q_x, const PwlTable& t) {
  const std::size_t i = t.locate(q_x);
  const long double intercept =
      std::ldexp(static_cast<long double>(t.intercept_fx[i]), -PwlTable::kFractionBits);
  if (i == t.pieces()) return fake_requantize(intercept, t.out_qp.zero_point, t.out_qp.bitwidth);
  const long double slope =
      std::ldexp(static_cast<long double>(t.slope_fx[i]), -PwlTable::kFractionBits);
  float_audit::record(2);
  const long double value = slope * static_cast<long double>(q_x - t.knots_q[i]) + intercept;
  return fake_requantize(value, t.out_qp.zero_point, t.out_qp.bitwidth);
}

PwlErrorStats pwl_error(const ScalarFunction& f, const PwlTable& t) {
  PwlErrorStats s;
  for (Code q = 0; q <= t.in_qp.quant_max(); ++q) {
    const double x = dequantize(q, t.in_qp);
    const double exact = f(x);
    s.max_abs_error = std::max(s.max_abs_error, std::abs(eval_pwl_real(x, t) - exact));
    s.max_abs_error_quantized = std::max(
        s.max_abs_error_quantized, std::abs(dequantize(eval_pwl_int(q, t), t.out_qp) - exact));
  }
  return s;
}

void write_pwl_csv(std::ostream& os, const ScalarFunction& f, const PwlTable& t) {
  os << "q_x,real_in,real_out,int_out,piece_index\n";
  const auto precision = os.precision(17);
  for (Code q = 0; q <= t.in_qp.quant_max(); ++q) {
    const double x = dequantize(q, t.in_qp);
    const std::size_t piece = std::min(t.locate(q), t.pieces() - 1);
    os << q << ',' << x << ',' << f(x) << ',' << eval_pwl_int(q, t) << ',' << piece << '\n';
  }
  os.precision(precision);
}

}  // namespace intrnn
