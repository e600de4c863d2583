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

// Integer-only attention. Compiled a second time with -mgeneral-regs-only.

#include <algorithm>

#include "intrnn/attention.hpp"
#include "intrnn/error.hpp"

namespace intrnn {
namespace {

std::vector<Code> project(const QuantMatrix& w, std::span<const Code> x, std::int32_t zero_point,
                          const Requantizer& r) {
  std::vector<std::int16_t> xc(x.size());
  center_codes(x, zero_point, xc);
  std::vector<std::int32_t> acc(w.rows);
  matvec(w, xc, acc);
  std::vector<Code> out(w.rows);
  for (std::size_t a = 0; a < w.rows; ++a) out[a] = r(acc[a]);
  return out;
}

}  // namespace

SoftmaxCodes softmax_int_codes(std::span<const Code> q_e, const AttentionKernel& k) {
  if (q_e.empty()) throw ValidationError("softmax of an empty vector");
  const PwlTable& table = k.spec.exp_table;
  const std::int32_t z_exp = table.out_qp.zero_point;
  const Code top = *std::max_element(q_e.begin(), q_e.end());
  SoftmaxCodes c;
  c.shifted.resize(q_e.size());
  c.exp.resize(q_e.size());
  std::int32_t total = 0;
  for (std::size_t i = 0; i < q_e.size(); ++i) {
    c.shifted[i] = k.shift(q_e[i] - top);
    c.exp[i] = eval_pwl_int(c.shifted[i], table);
    total += c.exp[i] - z_exp;
  }
  c.denominator = total;
  // The maximum maps to the last code of the exp table, exp(0) = 1, so the
  // denominator is at least 255.
  const std::int32_t top_code = (std::int32_t{1} << 8) - 1;
  c.alpha.resize(q_e.size());
  for (std::size_t i = 0; i < q_e.size(); ++i) {
    const std::int64_t numerator = static_cast<std::int64_t>(c.exp[i] - z_exp) * top_code;
    c.alpha[i] = saturate(rounding_divide(numerator, std::max<std::int32_t>(total, 1)), 8);
  }
  return c;
}

std::vector<Code> softmax_int(std::span<const Code> q_e, const AttentionKernel& k) {
  return softmax_int_codes(q_e, k).alpha;
}

CodeSequence attention_keys_int(const CodeSequence& q_enc, const AttentionKernel& k) {
  CodeSequence keys;
  keys.reserve(q_enc.size());
  for (const auto& x : q_enc) {
    if (x.size() != k.spec.key_size) throw ValidationError("attention key size mismatch");
    keys.push_back(project(k.spec.w_k, x, k.spec.qp_enc.zero_point, k.k));
  }
  return keys;
}

AttentionCodes attention_int_codes(std::span<const Code> q_h, const CodeSequence& q_enc,
                                   const CodeSequence& keys, const AttentionKernel& k) {
  const QuantAttentionSpec& s = k.spec;
  const std::size_t m = s.attention_size;
  const std::size_t T = q_enc.size();
  if (T == 0) throw ValidationError("attention needs at least one encoder state");
  if (keys.size() != T) throw ValidationError("attention keys do not match the encoder states");
  if (q_h.size() != s.query_size) throw ValidationError("attention query size mismatch");

  AttentionCodes c;
  c.q = project(s.w_q, q_h, s.qp_h.zero_point, k.q);
  c.keys = keys;
  c.pre.resize(T, std::vector<Code>(m));
  c.tanh.resize(T, std::vector<Code>(m));
  c.e.resize(T);
  const std::int32_t z_t = s.tanh_table.out_qp.zero_point;
  for (std::size_t i = 0; i < T; ++i) {
    std::int64_t e = 0;
    for (std::size_t a = 0; a < m; ++a) {
      c.pre[i][a] = k.pre.apply2(c.q[a] - s.qp_q.zero_point, keys[i][a] - s.qp_k.zero_point);
      c.tanh[i][a] = eval_pwl_int(c.pre[i][a], s.tanh_table);
      e += static_cast<std::int64_t>(s.v.centered[a]) * (c.tanh[i][a] - z_t);
    }
    c.e[i] = k.e(e);
  }

  SoftmaxCodes sm = softmax_int_codes(c.e, k);
  c.shifted = std::move(sm.shifted);
  c.exp = std::move(sm.exp);
  c.denominator = sm.denominator;
  c.alpha = std::move(sm.alpha);

  c.context.resize(s.key_size);
  for (std::size_t u = 0; u < s.key_size; ++u) {
    std::int64_t acc = 0;
    for (std::size_t i = 0; i < T; ++i) {
      acc += static_cast<std::int64_t>(c.alpha[i]) * (q_enc[i][u] - s.qp_enc.zero_point);
    }
    c.context[u] = k.s(acc);
  }
  return c;
}

AttentionCodes attention_int_codes(std::span<const Code> q_h, const CodeSequence& q_enc,
                                   const AttentionKernel& k) {
  return attention_int_codes(q_h, q_enc, attention_keys_int(q_enc, k), k);
}

std::vector<Code> inject_context(std::span<const Code> q_mx, std::span<const Code> q_mh,
                                 std::span<const Code> q_s, const LstmKernel& cell) {
  const QuantLstmSpec& s = cell.spec;
  if (s.context_size == 0 || q_s.size() != s.context_size) {
    throw ValidationError("context does not match the cell's context input");
  }
  const std::vector<Code> ms = project(s.w_s, q_s, s.qp_s.zero_point, cell.ms);
  return gate_preactivations(q_mx, q_mh, ms, cell);
}

}  // namespace intrnn
