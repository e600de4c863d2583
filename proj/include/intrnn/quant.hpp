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

#ifndef INTRNN_QUANT_HPP_
#define INTRNN_QUANT_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace intrnn {

// A quantized value. Activations are 8- or 16-bit unsigned codes; a 32-bit
// signed carrier covers both and the centered differences (q - Z).
using Code = std::int32_t;

// Affine quantization parameters of one tensor or stage.
//
//   scale      = (max - min) / (2^bitwidth - 1)
//   zero_point = round(-min / scale)
//
// min <= 0 <= max always holds, so real zero is exactly representable.
struct QuantParams {
  double min = 0.0;
  double max = 0.0;
  int bitwidth = 8;
  double scale = 1.0;
  std::int32_t zero_point = 0;

  std::int32_t quant_max() const { return (std::int32_t{1} << bitwidth) - 1; }
  bool operator==(const QuantParams&) const = default;
};

// Widens [min, max] to include zero and derives scale and zero-point.
// Throws ValidationError for bitwidths other than 8/16, for min > max, and
// for the degenerate all-zero range.
QuantParams compute_qparams(double min, double max, int bitwidth);

// Clips x to [min, max], then round(x / scale) + zero_point, saturated.
Code quantize(double x, const QuantParams& qp);
double dequantize(Code q, const QuantParams& qp);

std::vector<Code> quantize(std::span<const double> x, const QuantParams& qp);
std::vector<double> dequantize(std::span<const Code> q, const QuantParams& qp);

// quantize(dequantize(quantize(x))) as a real number.
double fake_quantize(double x, const QuantParams& qp);

// ---------------------------------------------------------------------------
// Integer rounding helpers. Every rounding in the library is
// round-half-away-from-zero; these are the integer forms of it.

using Wide = __int128;

// round(v / 2^shift), ties away from zero. shift >= 0.
inline std::int64_t rounding_shift_right(Wide v, int shift) {
  if (shift <= 0) return static_cast<std::int64_t>(v);
  if (shift >= 127) return 0;
  using UWide = unsigned __int128;
  const bool negative = v < 0;
  const UWide magnitude = negative ? static_cast<UWide>(-v) : static_cast<UWide>(v);
  const UWide rounded = (magnitude + (UWide{1} << (shift - 1))) >> shift;
  const UWide limit = static_cast<UWide>(std::numeric_limits<std::int64_t>::max());
  const std::int64_t r = static_cast<std::int64_t>(std::min(rounded, limit));
  return negative ? -r : r;
}

// round(num / den), ties away from zero. den > 0.
inline std::int64_t rounding_divide(std::int64_t num, std::int64_t den) {
  const bool negative = num < 0;
  const Wide magnitude = negative ? -static_cast<Wide>(num) : static_cast<Wide>(num);
  const Wide q = (2 * magnitude + den) / (2 * static_cast<Wide>(den));
  return negative ? -static_cast<std::int64_t>(q) : static_cast<std::int64_t>(q);
}

// Clamps to the unsigned code range of the given bitwidth.
inline Code saturate(std::int64_t v, int bitwidth) {
  const std::int64_t hi = (std::int64_t{1} << bitwidth) - 1;
  return static_cast<Code>(std::clamp<std::int64_t>(v, 0, hi));
}

inline std::int32_t saturate_int32(std::int64_t v) {
  return static_cast<std::int32_t>(std::clamp<std::int64_t>(
      v, std::numeric_limits<std::int32_t>::min(),
      std::numeric_limits<std::int32_t>::max()));
}

// ---------------------------------------------------------------------------

// A real constant in [0, 1) as mantissa * 2^(-31 - right_shift), with the
// mantissa either 0 or normalized into [2^30, 2^31).
struct FixedPointMultiplier {
  std::int32_t mantissa = 0;
  int right_shift = 0;

  // Throws ValidationError for r < 0, r >= 1 and non-finite r.
  static FixedPointMultiplier from_real(double r);

  long double represented() const;
  bool operator==(const FixedPointMultiplier&) const = default;
};

// clamp(round(acc * m) + out_zero_point, 0, 2^out_bitwidth - 1) computed with
// a 64-bit product and one rounding shift.
inline Code requantize(std::int32_t acc, const FixedPointMultiplier& m,
                       std::int32_t out_zero_point, int out_bitwidth) {
  const Wide product = static_cast<Wide>(acc) * m.mantissa;
  return saturate(rounding_shift_right(product, 31 + m.right_shift) + out_zero_point,
                  out_bitwidth);
}

// Rescales an accumulator by a positive real multiplier of any magnitude into
// an output code range. Multipliers >= 1 keep their integer part as a left
// pre-shift applied before the fixed-point multiply.
struct Requantizer {
  FixedPointMultiplier multiplier;
  int pre_shift = 0;
  std::int32_t zero_point = 0;
  int bitwidth = 8;

  static Requantizer create(double real_multiplier, const QuantParams& out);

  // round(acc * multiplier) without zero-point or saturation.
  std::int64_t scale(std::int64_t acc) const {
    const Wide product = static_cast<Wide>(acc) * multiplier.mantissa;
    const int shift = 31 + multiplier.right_shift - pre_shift;
    return rounding_shift_right(product, shift);
  }

  Code operator()(std::int64_t acc) const { return saturate(scale(acc) + zero_point, bitwidth); }

  long double represented() const;
  bool operator==(const Requantizer&) const = default;
};

// round(sum_j c_j * x_j + offset) + zero_point, saturated, where the real
// coefficients c_j (any sign) and the offset share one power-of-two
// denominator 2^shift. Used wherever differently scaled operands are added
// into a common output scale.
struct LinearRequantizer {
  std::vector<std::int64_t> coefficients;
  std::int64_t offset = 0;
  int shift = 0;
  std::int32_t zero_point = 0;
  int bitwidth = 8;

  static LinearRequantizer create(std::span<const double> ratios, double offset,
                                  const QuantParams& out);

  Code apply(std::span<const std::int64_t> terms) const {
    Wide total = offset;
    for (std::size_t j = 0; j < coefficients.size(); ++j) {
      total += static_cast<Wide>(coefficients[j]) * terms[j];
    }
    return saturate(rounding_shift_right(total, shift) + zero_point, bitwidth);
  }

  Code apply2(std::int64_t a, std::int64_t b) const {
    const Wide total = static_cast<Wide>(coefficients[0]) * a +
                       static_cast<Wide>(coefficients[1]) * b + offset;
    return saturate(rounding_shift_right(total, shift) + zero_point, bitwidth);
  }

  long double coefficient(std::size_t j) const;
  long double offset_value() const;
  bool operator==(const LinearRequantizer&) const = default;
};

// Oracle-side counterpart of the integer rescaling kernels: rounds an exactly
// represented real value (half away from zero), adds the zero-point and
// saturates. Used by the fake-quantization reference paths.
Code fake_requantize(long double value, std::int32_t zero_point, int bitwidth);

// A shaped buffer of quantized codes.
struct QuantTensor {
  std::vector<std::size_t> shape;
  std::vector<Code> data;
  QuantParams qp;

  std::size_t size() const { return data.size(); }
  // Throws ValidationError unless data matches shape and every code is in
  // range for qp.bitwidth.
  void validate() const;
};

}  // namespace intrnn

#endif  // INTRNN_QUANT_HPP_
