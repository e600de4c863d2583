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

#ifndef INTRNN_MATRIX_HPP_
#define INTRNN_MATRIX_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "intrnn/quant.hpp"

namespace intrnn {

// Row-major 8-bit weight matrix with per-tensor affine parameters. Codes are
// kept centered (q - Z) as 16-bit values so the inner loop is a plain
// 16x16->32 multiply-accumulate.
struct QuantMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  QuantParams qp;
  std::vector<std::int16_t> centered;

  Code code(std::size_t r, std::size_t c) const { return centered[r * cols + c] + qp.zero_point; }
  std::vector<Code> codes() const;

  // 8-bit quantization over the value range. An all-zero matrix uses [-1, 1].
  static QuantMatrix quantize(std::span<const double> values, std::size_t rows, std::size_t cols);
  // Throws ValidationError on size or range mismatch.
  static QuantMatrix from_codes(std::span<const Code> codes, std::size_t rows, std::size_t cols,
                                const QuantParams& qp);

  std::vector<double> dequantized() const;
};

// Codes minus the zero-point, narrowed to 16 bits (8-bit codes only).
inline void center_codes(std::span<const Code> q, std::int32_t zero_point,
                         std::span<std::int16_t> out) {
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = static_cast<std::int16_t>(q[i] - zero_point);
}

// out[r] = sum_c (W[r][c] - Z_w) * x[c], 32-bit accumulation. x is centered.
// With 8-bit operands this cannot overflow for cols <= 16384.
inline void matvec(const QuantMatrix& w, std::span<const std::int16_t> x,
                   std::span<std::int32_t> out) {
  const std::int16_t* row = w.centered.data();
  for (std::size_t r = 0; r < w.rows; ++r, row += w.cols) {
    std::int32_t acc = 0;
    for (std::size_t c = 0; c < w.cols; ++c) acc += static_cast<std::int32_t>(row[c]) * x[c];
    out[r] = acc;
  }
}

}  // namespace intrnn

#endif  // INTRNN_MATRIX_HPP_
