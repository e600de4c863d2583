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

#include "intrnn/quant.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "intrnn/error.hpp"
#include "intrnn/float_audit.hpp"

namespace intrnn {

QuantParams compute_qparams(double min, double max, int bitwidth) {
  if (bitwidth != 8 && bitwidth != 16) {
    throw ValidationError("unsupported bitwidth " + std::to_string(bitwidth));
  }
  if (!std::isfinite(min) || !std::isfinite(max) || min > max) {
    throw ValidationError("invalid quantization range [" + std::to_string(min) + ", " +
                          std::to_string(max) + "]");
  }
  min = std::min(min, 0.0);
  max = std::max(max, 0.0);
  if (min == max) {
    throw ValidationError("degenerate quantization range: min = max = 0");
  }
  float_audit::record(4);
  QuantParams qp;
  qp.min = min;
  qp.max = max;
  qp.bitwidth = bitwidth;
  qp.scale = (max - min) / static_cast<double>(qp.quant_max());
  qp.zero_point = static_cast<std::int32_t>(
      std::clamp<double>(std::round(-min / qp.scale), 0.0, qp.quant_max()));
  return qp;
}

Code quantize(double x, const QuantParams& qp) {
  float_audit::record(3);
  const double clipped = std::clamp(x, qp.min, qp.max);
  const double q = std::round(clipped / qp.scale) + qp.zero_point;
  return static_cast<Code>(std::clamp<double>(q, 0.0, qp.quant_max()));
}

double dequantize(Code q, const QuantParams& qp) {
  float_audit::record(1);
  return qp.scale * static_cast<double>(q - qp.zero_point);
}

std::vector<Code> quantize(std::span<const double> x, const QuantParams& qp) {
  std::vector<Code> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = quantize(x[i], qp);
  return out;
}

std::vector<double> dequantize(std::span<const Code> q, const QuantParams& qp) {
  std::vector<double> out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = dequantize(q[i], qp);
  return out;
}

double fake_quantize(double x, const QuantParams& qp) { return dequantize(quantize(x, qp), qp); }

FixedPointMultiplier FixedPointMultiplier::from_real(double r) {
  if (!std::isfinite(r) || r < 0.0) {
    throw ValidationError("fixed-point multiplier must be finite and non-negative");
  }
  if (r >= 1.0) {
    throw ValidationError("fixed-point multiplier must be < 1, got " + std::to_string(r));
  }
  float_audit::record(3);
  FixedPointMultiplier m;
  if (r == 0.0) return m;
  int exponent = 0;
  const double fraction = std::frexp(r, &exponent);  // r = fraction * 2^exponent
  std::int64_t mantissa = std::llround(std::ldexp(fraction, 31));
  if (mantissa == (std::int64_t{1} << 31)) mantissa -= 1;
  m.mantissa = static_cast<std::int32_t>(mantissa);
  m.right_shift = -exponent;
  return m;
}

long double FixedPointMultiplier::represented() const {
  return std::ldexp(static_cast<long double>(mantissa), -31 - right_shift);
}

Requantizer Requantizer::create(double real_multiplier, const QuantParams& out) {
  if (!std::isfinite(real_multiplier) || real_multiplier < 0.0) {
    throw ValidationError("requantization multiplier must be finite and non-negative");
  }
  Requantizer rq;
  rq.zero_point = out.zero_point;
  rq.bitwidth = out.bitwidth;
  if (real_multiplier == 0.0) return rq;
  int exponent = 0;
  std::frexp(real_multiplier, &exponent);
  if (exponent > 31) {
    throw ValidationError("requantization multiplier too large: " +
                          std::to_string(real_multiplier));
  }
  rq.pre_shift = std::max(exponent, 0);
  rq.multiplier = FixedPointMultiplier::from_real(std::ldexp(real_multiplier, -rq.pre_shift));
  return rq;
}

long double Requantizer::represented() const {
  return std::ldexp(multiplier.represented(), pre_shift);
}

LinearRequantizer LinearRequantizer::create(std::span<const double> ratios, double offset,
                                            const QuantParams& out) {
  LinearRequantizer lr;
  lr.zero_point = out.zero_point;
  lr.bitwidth = out.bitwidth;
  double largest = 0.0;
  for (double r : ratios) {
    if (!std::isfinite(r)) throw ValidationError("non-finite rescaling coefficient");
    largest = std::max(largest, std::abs(r));
  }
  if (!std::isfinite(offset)) throw ValidationError("non-finite rescaling offset");
  float_audit::record(2 * ratios.size() + 2);

  int shift = 0;
  if (largest > 0.0) {
    int exponent = 0;
    std::frexp(largest, &exponent);
    if (exponent > 31) throw ValidationError("rescaling coefficient too large");
    shift = 31 - exponent;
  }
  if (offset != 0.0) {
    int exponent = 0;
    std::frexp(offset, &exponent);
    shift = std::min(shift, 61 - exponent);
  }
  if (shift < 0) throw ValidationError("rescaling offset too large");
  shift = std::min(shift, 120);
  lr.shift = shift;
  lr.coefficients.reserve(ratios.size());
  for (double r : ratios) lr.coefficients.push_back(std::llround(std::ldexp(r, shift)));
  lr.offset = std::llround(std::ldexp(offset, shift));
  return lr;
}

long double LinearRequantizer::coefficient(std::size_t j) const {
  return std::ldexp(static_cast<long double>(coefficients.at(j)), -shift);
}

long double LinearRequantizer::offset_value() const {
  return std::ldexp(static_cast<long double>(offset), -shift);
}

Code fake_requantize(long double value, std::int32_t zero_point, int bitwidth) {
  float_audit::record(2);
  const long double hi = static_cast<long double>((std::int64_t{1} << bitwidth) - 1);
  const long double q = std::roundl(value) + zero_point;
  return static_cast<Code>(std::clamp<long double>(q, 0.0L, hi));
}

void QuantTensor::validate() const {
  const std::size_t expected =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  if (expected != data.size()) {
    throw ValidationError("tensor data length " + std::to_string(data.size()) +
                          " does not match shape product " + std::to_string(expected));
  }
  const Code hi = qp.quant_max();
  for (Code c : data) {
    if (c < 0 || c > hi) throw ValidationError("code " + std::to_string(c) + " out of range");
  }
}

}  // namespace intrnn
