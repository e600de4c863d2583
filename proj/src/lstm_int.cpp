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

// Integer-only LSTM. Compiled a second time with -mgeneral-regs-only.

#include "intrnn/error.hpp"
#include "intrnn/lstm.hpp"

namespace intrnn {
namespace {

std::vector<std::int16_t> centered(std::span<const Code> q, std::int32_t zero_point) {
  std::vector<std::int16_t> out(q.size());
  center_codes(q, zero_point, out);
  return out;
}

}  // namespace

std::vector<Code> gate_preactivations(std::span<const Code> q_mx, std::span<const Code> q_mh,
                                      std::span<const Code> q_ms, const LstmKernel& k) {
  const QuantLstmSpec& s = k.spec;
  const std::size_t m = s.hidden_size;
  const std::size_t rows = 4 * m;
  std::int32_t z_first = s.qp_mx.zero_point;
  std::int32_t z_second = s.qp_mh.zero_point;
  if (s.madnorm) {
    z_first = s.norm_x->output_qparams().zero_point;
    z_second = s.norm_h->output_qparams().zero_point;
  }
  const bool context = s.context_size > 0;
  std::vector<Code> gates(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::int64_t terms[3] = {q_mx[r] - z_first, q_mh[r] - z_second, 0};
    if (s.madnorm) terms[0] += s.bias[r];
    if (context) terms[2] = q_ms[r] - s.qp_ms.zero_point;
    const LinearRequantizer& lr = k.gate[r / m];
    gates[r] = context ? lr.apply(terms) : lr.apply2(terms[0], terms[1]);
  }
  return gates;
}

LstmCodes lstm_step_int_codes(std::span<const Code> q_x, const QuantLstmState& state,
                              const LstmKernel& k, std::span<const Code> q_context,
                              ActivationEvaluator activation) {
  const QuantLstmSpec& s = k.spec;
  const std::size_t m = s.hidden_size;
  const std::size_t rows = 4 * m;
  if (q_x.size() != s.input_size || state.h.size() != m || state.c.size() != m ||
      q_context.size() != s.context_size) {
    throw ValidationError("lstm step input sizes do not match the spec");
  }
  if (activation == nullptr) activation = eval_pwl_int;
  LstmCodes c;

  std::vector<std::int32_t> acc(rows);
  matvec(s.w_x, centered(q_x, s.qp_x.zero_point), acc);
  c.mx.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::int64_t bias = s.madnorm ? 0 : s.bias[r];
    c.mx[r] = k.mx(acc[r] + bias);
  }
  matvec(s.w_h, centered(state.h, s.qp_h.zero_point), acc);
  c.mh.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) c.mh[r] = k.mh(acc[r]);
  if (s.context_size > 0) {
    matvec(s.w_s, centered(q_context, s.qp_s.zero_point), acc);
    c.ms.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) c.ms[r] = k.ms(acc[r]);
  }

  if (s.madnorm) {
    c.nx = madnorm_int(c.mx, *k.norm_x);
    c.nh = madnorm_int(c.mh, *k.norm_h);
    c.gates = gate_preactivations(c.nx, c.nh, c.ms, k);
  } else {
    c.gates = gate_preactivations(c.mx, c.mh, c.ms, k);
  }
  c.activations.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    c.activations[r] = activation(c.gates[r], s.gate_tables[r / m]);
  }

  const std::int32_t z_i = s.gate_tables[kInputGate].out_qp.zero_point;
  const std::int32_t z_f = s.gate_tables[kForgetGate].out_qp.zero_point;
  const std::int32_t z_j = s.gate_tables[kCandidate].out_qp.zero_point;
  const std::int32_t z_o = s.gate_tables[kOutputGate].out_qp.zero_point;
  c.fc.resize(m);
  c.ij.resize(m);
  c.c.resize(m);
  for (std::size_t u = 0; u < m; ++u) {
    const std::int64_t f = c.activations[m + u] - z_f;
    const std::int64_t i = c.activations[u] - z_i;
    const std::int64_t j = c.activations[2 * m + u] - z_j;
    c.fc[u] = k.fc(f * (state.c[u] - s.qp_c.zero_point));
    c.ij[u] = k.ij(i * j);
    c.c[u] = k.cell.apply2(c.fc[u] - s.qp_fc.zero_point, c.ij[u] - s.qp_ij.zero_point);
  }

  std::span<const Code> cell_in = c.c;
  if (s.madnorm) {
    c.nc = madnorm_int(c.c, *k.norm_c);
    cell_in = c.nc;
  }
  c.tc.resize(m);
  c.h.resize(m);
  const std::int32_t z_tc = s.cell_table.out_qp.zero_point;
  for (std::size_t u = 0; u < m; ++u) {
    c.tc[u] = activation(cell_in[u], s.cell_table);
    const std::int64_t o = c.activations[3 * m + u] - z_o;
    c.h[u] = k.h(o * (c.tc[u] - z_tc));
  }
  return c;
}

QuantLstmState lstm_step_int(std::span<const Code> q_x, const QuantLstmState& state,
                             const LstmKernel& k, std::span<const Code> q_context) {
  LstmCodes c = lstm_step_int_codes(q_x, state, k, q_context);
  return {std::move(c.h), std::move(c.c)};
}

CodeSequence lstm_sequence_int(const CodeSequence& xs, const LstmKernel& k, Direction direction,
                               ActivationEvaluator activation) {
  const std::size_t t_len = xs.size();
  CodeSequence out(t_len);
  QuantLstmState state = QuantLstmState::zeros(k.spec);
  for (std::size_t s = 0; s < t_len; ++s) {
    const std::size_t t = direction == Direction::kForward ? s : t_len - 1 - s;
    LstmCodes c = lstm_step_int_codes(xs[t], state, k, {}, activation);
    state = {c.h, std::move(c.c)};
    out[t] = std::move(c.h);
  }
  return out;
}

CodeSequence bilstm_sequence_int(const CodeSequence& xs, const BiLstmKernel& k,
                                 ActivationEvaluator activation) {
  const CodeSequence f = lstm_sequence_int(xs, k.forward, Direction::kForward, activation);
  const CodeSequence b = lstm_sequence_int(xs, k.backward, Direction::kBackward, activation);
  CodeSequence out(xs.size());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    out[t] = f[t];
    out[t].insert(out[t].end(), b[t].begin(), b[t].end());
  }
  return out;
}

}  // namespace intrnn
