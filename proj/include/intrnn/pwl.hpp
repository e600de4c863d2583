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

#ifndef INTRNN_PWL_HPP_
#define INTRNN_PWL_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "intrnn/quant.hpp"

namespace intrnn {

enum class Activation { kIdentity, kSigmoid, kTanh, kExp };

double apply_activation(Activation a, double x);
std::string_view activation_name(Activation a);
// Throws ValidationError for unknown names.
Activation parse_activation(std::string_view name);

using ScalarFunction = std::function<double(double)>;

// 2^b-entry table: lut[q] = quantize(f(dequantize(q, in)), out).
std::vector<Code> build_lut(const ScalarFunction& f, const QuantParams& in_qp,
                            const QuantParams& out_qp);

struct KnotSelection {
  std::vector<double> knots;   // N + 1, ascending
  std::vector<double> slopes;  // N
  std::vector<double> values;  // N + 1, values[i] = f(knots[i])
};

// Greedy knot merging: while more than n_pieces pieces remain, drop the knot
// shared by the adjacent pair of pieces whose slopes differ the least (lowest
// position wins ties). Endpoints are never dropped. Runs in O(K log K).
KnotSelection select_knots(std::span<const double> knots, std::span<const double> values,
                           int n_pieces);

// Piecewise-linear approximation of a scalar function whose knots sit on the
// quantized input grid of in_qp.
//
// Real form:    g(x) = slopes[i] * (x - knots_r[i]) + values[i]
// Integer form: q_y  = round((slope_fx[i] * (q_x - knots_q[i]) + intercept_fx[i]) / 2^32) + Z_y
//
// slope_fx and intercept_fx are the per-piece constants slopes[i] * S_x / S_y
// and values[i] / S_y in Q32 fixed point.
struct PwlTable {
  static constexpr int kFractionBits = 32;

  std::vector<Code> knots_q;
  std::vector<double> knots_r;
  std::vector<double> slopes;
  std::vector<double> values;
  QuantParams in_qp;
  QuantParams out_qp;
  std::vector<std::int64_t> slope_fx;
  std::vector<std::int64_t> intercept_fx;
  // Set when the table approximates one of the named activations.
  std::optional<Activation> activation;

  std::size_t pieces() const { return slopes.size(); }
  std::span<const double> intercepts() const { return {values.data(), slopes.size()}; }

  // Index i of the piece covering q (knots_q[i] <= q < knots_q[i + 1]);
  // returns pieces() when q is the last knot.
  std::size_t locate(Code q) const;

  // Throws ValidationError if any structural invariant is broken.
  void validate() const;
};

// Builds the table from every code of in_qp (a 2^12-point sub-grid for
// 16-bit inputs), reduces it to n_pieces and derives the integer constants.
PwlTable build_pwl(const ScalarFunction& f, const QuantParams& in_qp, const QuantParams& out_qp,
                   int n_pieces);

PwlTable build_pwl(Activation a, const QuantParams& in_qp, const QuantParams& out_qp,
                   int n_pieces);

// Recomputes the integer constants from the real form.
void derive_integer_form(PwlTable& table);

double eval_pwl_real(double x, const PwlTable& t);

// Integer-only evaluation; q_x must be a valid code of t.in_qp.
Code eval_pwl_int(Code q_x, const PwlTable& t);

// Fake-quantization reference for eval_pwl_int: evaluates the decoded integer
// constants in extended-precision real arithmetic.
Code eval_pwl_fakequant(Code q_x, const PwlTable& t);

struct PwlErrorStats {
  double max_abs_error = 0.0;            // |g(x) - f(x)| over the input grid
  double max_abs_error_quantized = 0.0;  // |dequantize(int output) - f(x)|
};

PwlErrorStats pwl_error(const ScalarFunction& f, const PwlTable& t);

// CSV with header q_x,real_in,real_out,int_out,piece_index; one row per input
// code. real_out is f at the dequantized input.
void write_pwl_csv(std::ostream& os, const ScalarFunction& f, const PwlTable& t);

}  // namespace intrnn

#endif  // INTRNN_PWL_HPP_
