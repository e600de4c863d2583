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

// Integer-only PWL evaluation. This translation unit must not contain any
// floating-point code; the build compiles it a second time with
// -mgeneral-regs-only to prove that.

#include "intrnn/pwl.hpp"

namespace intrnn {

Code eval_pwl_int(Code q_x, const PwlTable& t) {
  const std::size_t i = t.locate(q_x);
  Wide value = t.intercept_fx[i];
  if (i < t.pieces()) value += static_cast<Wide>(t.slope_fx[i]) * (q_x - t.knots_q[i]);
  return saturate(rounding_shift_right(value, PwlTable::kFractionBits) + t.out_qp.zero_point,
                  t.out_qp.bitwidth);
}

}  // namespace intrnn
