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

// Integer-only MadNorm. Compiled a second time with -mgeneral-regs-only.

#include <algorithm>
#include <cstdlib>

#include "intrnn/madnorm.hpp"

namespace intrnn {
namespace {

// round(num / den) for den > 0, ties away from zero, on 128-bit operands.
std::int64_t rounding_divide_wide(Wide num, Wide den) {
  const bool negative = num < 0;
  const Wide magnitude = negative ? -num : num;
  const Wide q = (2 * magnitude + den) / (2 * den);
  return negative ? -static_cast<std::int64_t>(q) : static_cast<std::int64_t>(q);
}

}  // namespace

MadNormCodes madnorm_int_codes(std::span<const Code> q_x, const MadNormKernel& k) {
  const MadNormQParams& p = k.params;
  const std::size_t n = q_x.size();
  MadNormCodes c;

  std::int64_t sum = 0;
  for (Code q : q_x) sum += q - p.qp_x.zero_point;
  c.mu = k.mean(sum);

  const std::int64_t mean_term = -(c.mu - p.qp_mu.zero_point);
  c.xhat.resize(n);
  std::int64_t abs_sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    c.xhat[i] = k.center.apply2(q_x[i] - p.qp_x.zero_point, mean_term);
    abs_sum += std::abs(c.xhat[i] - p.qp_xhat.zero_point);
  }
  c.d = k.deviation(abs_sum);

  // y = coefficient * centered / (max(d, 1) * 2^shift)
  const Wide divisor = std::max<Code>(c.d, 1);
  Wide den = divisor;
  int left = 0;
  if (k.y_shift >= 0) {
    den = divisor << std::min(k.y_shift, 100);
  } else {
    left = -k.y_shift;
  }
  c.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Wide num = static_cast<Wide>(k.y_coefficient) * (c.xhat[i] - p.qp_xhat.zero_point)
                     << left;
    c.y[i] = saturate(rounding_divide_wide(num, den) + p.qp_y.zero_point, 8);
  }

  if (k.affine) {
    const MadNormAffine& af = *p.affine;
    c.out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::int64_t scaled = static_cast<std::int64_t>(af.gamma_q[i] - af.qp_gamma.zero_point) *
                                  (c.y[i] - p.qp_y.zero_point);
      c.out[i] = k.affine->apply2(scaled, af.beta_q[i] - af.qp_beta.zero_point);
    }
  } else {
    c.out = c.y;
  }
  return c;
}

std::vector<Code> madnorm_int(std::span<const Code> q_x, const MadNormKernel& kernel) {
  return madnorm_int_codes(q_x, kernel).out;
}

}  // namespace intrnn
