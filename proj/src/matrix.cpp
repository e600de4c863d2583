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

#include "intrnn/matrix.hpp"

#include <algorithm>

#include "intrnn/error.hpp"

namespace intrnn {

std::vector<Code> QuantMatrix::codes() const {
  std::vector<Code> out(centered.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = centered[i] + qp.zero_point;
  return out;
}

QuantMatrix QuantMatrix::quantize(std::span<const double> values, std::size_t rows,
                                  std::size_t cols) {
  if (values.size() != rows * cols) throw ValidationError("matrix size does not match its shape");
  double lo = 0.0;
  double hi = 0.0;
  if (!values.empty()) {
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    lo = *mn;
    hi = *mx;
  }
  if (lo == 0.0 && hi == 0.0) {
    lo = -1.0;
    hi = 1.0;
  }
  const QuantParams qp = compute_qparams(lo, hi, 8);
  return from_codes(intrnn::quantize(values, qp), rows, cols, qp);
}

QuantMatrix QuantMatrix::from_codes(std::span<const Code> codes, std::size_t rows,
                                    std::size_t cols, const QuantParams& qp) {
  if (codes.size() != rows * cols) throw ValidationError("matrix size does not match its shape");
  if (qp.bitwidth != 8) throw ValidationError("weight matrices must be 8-bit");
  QuantMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.qp = qp;
  m.centered.resize(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] < 0 || codes[i] > qp.quant_max()) {
      throw ValidationError("weight code out of range");
    }
    m.centered[i] = static_cast<std::int16_t>(codes[i] - qp.zero_point);
  }
  return m;
}

std::vector<double> QuantMatrix::dequantized() const {
  return dequantize(codes(), qp);
}

}  // namespace intrnn
