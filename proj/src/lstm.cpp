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

#include "intrnn/lstm.hpp"

#include <cmath>
#include <string>

#include "intrnn/error.hpp"
#include "intrnn/float_audit.hpp"

namespace intrnn {
namespace {

constexpr const char* kGateNames[4] = {"i", "f", "j", "o"};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// out[r] = sum_c W[r][c] x[c]
void matvec_real(std::span<const double> w, std::span<const double> x, std::size_t rows,
                 std::span<double> out) {
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * x[c];
    out[r] = acc;
  }
}

Activation gate_activation(std::size_t gate) {
  return gate == kCandidate ? Activation::kTanh : Activation::kSigmoid;
}

void check_bits(const QuantParams& qp, int bits, const char* what) {
  if (qp.bitwidth != bits) {
    throw ValidationError(std::string("lstm ") + what + " must be " + std::to_string(bits) +
                          "-bit");
  }
}

}  // namespace

void LstmWeights::validate() const {
  const std::size_t rows = 4 * hidden_size;
  if (input_size < 1 || hidden_size < 1) throw ValidationError("lstm dimensions must be >= 1");
  if (input_size > 16384 || hidden_size > 16384 || context_size > 16384) {
    throw ValidationError("lstm dimensions are limited to 16384");
  }
  if (w_x.size() != rows * input_size || w_h.size() != rows * hidden_size ||
      w_s.size() != rows * context_size || bias.size() != rows) {
    throw ValidationError("lstm weight shapes are inconsistent");
  }
}

LstmWeights random_lstm_weights(std::size_t input_size, std::size_t hidden_size, double scale,
                                std::mt19937_64& rng, bool madnorm, std::size_t context_size) {
  std::uniform_real_distribution<double> u(-scale, scale);
  LstmWeights w;
  w.input_size = input_size;
  w.hidden_size = hidden_size;
  w.context_size = context_size;
  w.madnorm = madnorm;
  const std::size_t rows = 4 * hidden_size;
  for (auto [v, n] : {std::pair{&w.w_x, rows * input_size}, std::pair{&w.w_h, rows * hidden_size},
                      std::pair{&w.w_s, rows * context_size}, std::pair{&w.bias, rows}}) {
    v->resize(n);
    for (double& x : *v) x = u(rng);
  }
  return w;
}

LstmState lstm_step_real(std::span<const double> x, const LstmState& state, const LstmWeights& w,
                         std::span<const double> context, StageRecorder* recorder) {
  const std::size_t m = w.hidden_size;
  const std::size_t rows = 4 * m;
  if (x.size() != w.input_size || state.h.size() != m || state.c.size() != m ||
      context.size() != w.context_size) {
    throw ValidationError("lstm step input sizes do not match the weights");
  }
  float_audit::record(2 * rows * (w.input_size + m + w.context_size) + 20 * rows);

  std::vector<double> mx(rows), mh(rows), ms(rows, 0.0);
  matvec_real(w.w_x, x, rows, mx);
  matvec_real(w.w_h, state.h, rows, mh);
  if (!w.madnorm) {
    for (std::size_t r = 0; r < rows; ++r) mx[r] += w.bias[r];
  }
  record_stage(recorder, "mx", mx);
  record_stage(recorder, "mh", mh);
  if (w.context_size > 0) {
    matvec_real(w.w_s, context, rows, ms);
    record_stage(recorder, "ms", ms);
  }

  std::vector<double> pre(rows);
  if (w.madnorm) {
    PrefixedRecorder rx(recorder, "nx");
    PrefixedRecorder rh(recorder, "nh");
    const std::vector<double> nx = madnorm_real(mx, &rx);
    const std::vector<double> nh = madnorm_real(mh, &rh);
    for (std::size_t r = 0; r < rows; ++r) pre[r] = nx[r] + nh[r] + w.bias[r] + ms[r];
  } else {
    for (std::size_t r = 0; r < rows; ++r) pre[r] = mx[r] + mh[r] + ms[r];
  }
  for (std::size_t g = 0; g < 4; ++g) {
    record_stage(recorder, std::string("gate.") + kGateNames[g],
                 std::span<const double>(pre).subspan(g * m, m));
  }

  LstmState next{std::vector<double>(m), std::vector<double>(m)};
  std::vector<double> fc(m), ij(m);
  for (std::size_t u = 0; u < m; ++u) {
    const double i = sigmoid(pre[u]);
    const double f = sigmoid(pre[m + u]);
    const double j = std::tanh(pre[2 * m + u]);
    fc[u] = f * state.c[u];
    ij[u] = i * j;
    next.c[u] = fc[u] + ij[u];
  }
  record_stage(recorder, "fc", fc);
  record_stage(recorder, "ij", ij);
  record_stage(recorder, "c", next.c);

  std::vector<double> cell_in = next.c;
  if (w.madnorm) {
    PrefixedRecorder rc(recorder, "nc");
    cell_in = madnorm_real(next.c, &rc);
  }
  for (std::size_t u = 0; u < m; ++u) {
    next.h[u] = sigmoid(pre[3 * m + u]) * std::tanh(cell_in[u]);
  }
  record_stage(recorder, "h", next.h);
  return next;
}

Sequence lstm_sequence_real(const Sequence& xs, const LstmWeights& w, Direction direction,
                            StageRecorder* recorder) {
  w.validate();
  const std::size_t t_len = xs.size();
  Sequence out(t_len);
  LstmState state = LstmState::zeros(w.hidden_size);
  for (std::size_t s = 0; s < t_len; ++s) {
    const std::size_t t = direction == Direction::kForward ? s : t_len - 1 - s;
    state = lstm_step_real(xs[t], state, w, {}, recorder);
    out[t] = state.h;
  }
  return out;
}

Sequence bilstm_sequence_real(const Sequence& xs, const LstmWeights& forward,
                              const LstmWeights& backward, StageRecorder* recorder) {
  PrefixedRecorder rf(recorder, "fwd");
  PrefixedRecorder rb(recorder, "bwd");
  const Sequence f = lstm_sequence_real(xs, forward, Direction::kForward, &rf);
  const Sequence b = lstm_sequence_real(xs, backward, Direction::kBackward, &rb);
  Sequence out(xs.size());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    out[t] = f[t];
    out[t].insert(out[t].end(), b[t].begin(), b[t].end());
  }
  return out;
}

// ---------------------------------------------------------------------------

QuantParams sigmoid_output_qparams() { return compute_qparams(0.0, 1.0, 8); }
QuantParams tanh_output_qparams() { return compute_qparams(-1.0, 1.0, 8); }

void QuantLstmSpec::validate() const {
  const std::size_t m = hidden_size;
  const std::size_t rows = 4 * m;
  if (input_size < 1 || m < 1) throw ValidationError("lstm dimensions must be >= 1");
  if (input_size > 16384 || m > 16384 || context_size > 16384) {
    throw ValidationError("lstm dimensions are limited to 16384");
  }
  if (cell_bits != 8 && cell_bits != 16) throw ValidationError("lstm cell state must be 8- or 16-bit");
  check_bits(qp_x, 8, "input");
  check_bits(qp_h, 8, "hidden state");
  check_bits(qp_mx, 8, "input matmul output");
  check_bits(qp_mh, 8, "recurrent matmul output");
  check_bits(qp_c, cell_bits, "cell state");
  check_bits(qp_fc, cell_bits, "forget product");
  check_bits(qp_ij, cell_bits, "input product");
  for (const QuantParams& g : qp_gate) {
    if (g.bitwidth != 8 && g.bitwidth != 16) {
      throw ValidationError("lstm gate pre-activations must be 8- or 16-bit");
    }
  }
  if (w_x.rows != rows || w_x.cols != input_size || w_h.rows != rows || w_h.cols != m) {
    throw ValidationError("lstm weight shapes are inconsistent");
  }
  if (context_size > 0) {
    check_bits(qp_s, 8, "context");
    check_bits(qp_ms, 8, "context matmul output");
    if (w_s.rows != rows || w_s.cols != context_size) {
      throw ValidationError("lstm context weight shape is inconsistent");
    }
  }
  if (bias.size() != rows) throw ValidationError("lstm bias size is inconsistent");
  if (madnorm != (norm_x && norm_h && norm_c)) {
    throw ValidationError("madnorm cell needs all three normalizer specs");
  }
  if (madnorm) {
    if (!(norm_x->qp_x == qp_mx) || norm_x->hidden != rows || !(norm_h->qp_x == qp_mh) ||
        norm_h->hidden != rows || !(norm_c->qp_x == qp_c) || norm_c->hidden != m) {
      throw ValidationError("madnorm normalizer inputs do not match the cell stages");
    }
    norm_x->validate();
    norm_h->validate();
    norm_c->validate();
  }
  for (std::size_t g = 0; g < 4; ++g) {
    const PwlTable& t = gate_tables[g];
    t.validate();
    const QuantParams out =
        gate_activation(g) == Activation::kTanh ? tanh_output_qparams() : sigmoid_output_qparams();
    if (!(t.in_qp == qp_gate[g]) || !(t.out_qp == out)) {
      throw ValidationError("lstm gate table does not match the gate qparams");
    }
  }
  cell_table.validate();
  if (!(cell_table.in_qp == cell_table_input()) || !(cell_table.out_qp == tanh_output_qparams())) {
    throw ValidationError("lstm cell table does not match the cell qparams");
  }
}

QuantLstmSpec convert_lstm(const LstmWeights& w, const CalibrationObserver& observer,
                           std::string_view prefix, const QuantParams& qp_x,
                           const QuantParams& qp_h, const LstmConvertOptions& options,
                           const QuantParams* qp_s) {
  w.validate();
  if (w.context_size > 0 && qp_s == nullptr) {
    throw ValidationError("lstm with context input needs the context qparams");
  }
  const std::string p(prefix);
  const std::size_t m = w.hidden_size;
  const std::size_t rows = 4 * m;

  QuantLstmSpec s;
  s.input_size = w.input_size;
  s.hidden_size = m;
  s.context_size = w.context_size;
  s.madnorm = w.madnorm;
  s.cell_bits = options.cell_bits;
  s.qp_x = qp_x;
  s.qp_h = qp_h;
  s.w_x = QuantMatrix::quantize(w.w_x, rows, w.input_size);
  s.w_h = QuantMatrix::quantize(w.w_h, rows, m);
  s.qp_mx = observer.qparams(p + ".mx", 8);
  s.qp_mh = observer.qparams(p + ".mh", 8);
  if (w.context_size > 0) {
    s.qp_s = *qp_s;
    s.w_s = QuantMatrix::quantize(w.w_s, rows, w.context_size);
    s.qp_ms = observer.qparams(p + ".ms", 8);
  }
  for (std::size_t g = 0; g < 4; ++g) {
    s.qp_gate[g] = observer.qparams(p + ".gate." + kGateNames[g], options.gate_bits);
  }
  s.qp_fc = observer.qparams(p + ".fc", options.cell_bits);
  s.qp_ij = observer.qparams(p + ".ij", options.cell_bits);
  s.qp_c = observer.qparams(p + ".c", options.cell_bits);

  double bias_scale = s.w_x.qp.scale * qp_x.scale;
  if (w.madnorm) {
    s.norm_x = madnorm_qparams_from(observer, p + ".nx", s.qp_mx, rows);
    s.norm_h = madnorm_qparams_from(observer, p + ".nh", s.qp_mh, rows);
    s.norm_c = madnorm_qparams_from(observer, p + ".nc", s.qp_c, m);
    bias_scale = s.norm_x->output_qparams().scale;
  }
  float_audit::record(rows);
  s.bias.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    s.bias[r] = saturate_int32(std::llround(w.bias[r] / bias_scale));
  }

  for (std::size_t g = 0; g < 4; ++g) {
    const Activation a = gate_activation(g);
    const QuantParams out =
        a == Activation::kTanh ? tanh_output_qparams() : sigmoid_output_qparams();
    s.gate_tables[g] = build_pwl(a, s.qp_gate[g], out, options.pieces);
  }
  s.cell_table = build_pwl(Activation::kTanh, s.cell_table_input(), tanh_output_qparams(),
                           options.pieces);
  s.validate();
  return s;
}

LstmKernel LstmKernel::create(QuantLstmSpec spec) {
  spec.validate();
  float_audit::record(32);
  LstmKernel k;
  const QuantLstmSpec& s = spec;
  k.mx = Requantizer::create(s.w_x.qp.scale * s.qp_x.scale / s.qp_mx.scale, s.qp_mx);
  k.mh = Requantizer::create(s.w_h.qp.scale * s.qp_h.scale / s.qp_mh.scale, s.qp_mh);
  if (s.context_size > 0) {
    k.ms = Requantizer::create(s.w_s.qp.scale * s.qp_s.scale / s.qp_ms.scale, s.qp_ms);
  }
  double first_scale = s.qp_mx.scale;
  double second_scale = s.qp_mh.scale;
  if (s.madnorm) {
    k.norm_x = MadNormKernel::create(*s.norm_x);
    k.norm_h = MadNormKernel::create(*s.norm_h);
    k.norm_c = MadNormKernel::create(*s.norm_c);
    first_scale = s.norm_x->output_qparams().scale;
    second_scale = s.norm_h->output_qparams().scale;
  }
  for (std::size_t g = 0; g < 4; ++g) {
    const double sg = s.qp_gate[g].scale;
    std::vector<double> ratios = {first_scale / sg, second_scale / sg};
    if (s.context_size > 0) ratios.push_back(s.qp_ms.scale / sg);
    k.gate[g] = LinearRequantizer::create(ratios, 0.0, s.qp_gate[g]);
  }
  const double s_i = s.gate_tables[kInputGate].out_qp.scale;
  const double s_f = s.gate_tables[kForgetGate].out_qp.scale;
  const double s_j = s.gate_tables[kCandidate].out_qp.scale;
  const double s_o = s.gate_tables[kOutputGate].out_qp.scale;
  k.fc = Requantizer::create(s_f * s.qp_c.scale / s.qp_fc.scale, s.qp_fc);
  k.ij = Requantizer::create(s_i * s_j / s.qp_ij.scale, s.qp_ij);
  const double cell_ratios[2] = {s.qp_fc.scale / s.qp_c.scale, s.qp_ij.scale / s.qp_c.scale};
  k.cell = LinearRequantizer::create(cell_ratios, 0.0, s.qp_c);
  k.h = Requantizer::create(s_o * s.cell_table.out_qp.scale / s.qp_h.scale, s.qp_h);
  k.spec = std::move(spec);
  return k;
}

// ---------------------------------------------------------------------------
// Fake-quantization reference.

namespace {

Code fake_rescale(long double acc, const Requantizer& r) {
  return fake_requantize(acc * r.represented(), r.zero_point, r.bitwidth);
}

Code fake_linear(std::span<const long double> terms, const LinearRequantizer& lr) {
  long double value = lr.offset_value();
  for (std::size_t j = 0; j < terms.size(); ++j) value += lr.coefficient(j) * terms[j];
  return fake_requantize(value, lr.zero_point, lr.bitwidth);
}

std::vector<long double> fake_matvec(const QuantMatrix& w, std::span<const Code> x,
                                     std::int32_t zero_point) {
  std::vector<long double> out(w.rows, 0.0L);
  for (std::size_t r = 0; r < w.rows; ++r) {
    long double acc = 0.0L;
    for (std::size_t c = 0; c < w.cols; ++c) {
      acc += static_cast<long double>(w.code(r, c) - w.qp.zero_point) * (x[c] - zero_point);
    }
    out[r] = acc;
  }
  return out;
}

}  // namespace

LstmCodes lstm_step_fakequant_codes(std::span<const Code> q_x, const QuantLstmState& state,
                                    const LstmKernel& k, std::span<const Code> q_context) {
  const QuantLstmSpec& s = k.spec;
  const std::size_t m = s.hidden_size;
  const std::size_t rows = 4 * m;
  if (q_x.size() != s.input_size || state.h.size() != m || state.c.size() != m ||
      q_context.size() != s.context_size) {
    throw ValidationError("lstm step input sizes do not match the spec");
  }
  float_audit::record(2 * rows * (s.input_size + m + s.context_size) + 20 * rows);
  LstmCodes c;

  const std::vector<long double> ax = fake_matvec(s.w_x, q_x, s.qp_x.zero_point);
  const std::vector<long double> ah = fake_matvec(s.w_h, state.h, s.qp_h.zero_point);
  c.mx.resize(rows);
  c.mh.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    c.mx[r] = fake_rescale(ax[r] + (s.madnorm ? 0 : s.bias[r]), k.mx);
    c.mh[r] = fake_rescale(ah[r], k.mh);
  }
  if (s.context_size > 0) {
    const std::vector<long double> as = fake_matvec(s.w_s, q_context, s.qp_s.zero_point);
    c.ms.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) c.ms[r] = fake_rescale(as[r], k.ms);
  }

  std::span<const Code> first = c.mx;
  std::span<const Code> second = c.mh;
  std::int32_t z_first = s.qp_mx.zero_point;
  std::int32_t z_second = s.qp_mh.zero_point;
  if (s.madnorm) {
    c.nx = madnorm_fakequant_codes(c.mx, *k.norm_x).out;
    c.nh = madnorm_fakequant_codes(c.mh, *k.norm_h).out;
    first = c.nx;
    second = c.nh;
    z_first = s.norm_x->output_qparams().zero_point;
    z_second = s.norm_h->output_qparams().zero_point;
  }
  c.gates.resize(rows);
  c.activations.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t g = r / m;
    long double terms[3] = {static_cast<long double>(first[r] - z_first),
                            static_cast<long double>(second[r] - z_second), 0.0L};
    if (s.madnorm) terms[0] += s.bias[r];
    std::size_t n_terms = 2;
    if (s.context_size > 0) terms[n_terms++] = c.ms[r] - s.qp_ms.zero_point;
    c.gates[r] = fake_linear(std::span<const long double>(terms, n_terms), k.gate[g]);
    c.activations[r] = eval_pwl_fakequant(c.gates[r], s.gate_tables[g]);
  }

  const std::int32_t z_i = s.gate_tables[kInputGate].out_qp.zero_point;
  const std::int32_t z_f = s.gate_tables[kForgetGate].out_qp.zero_point;
  const std::int32_t z_j = s.gate_tables[kCandidate].out_qp.zero_point;
  const std::int32_t z_o = s.gate_tables[kOutputGate].out_qp.zero_point;
  c.fc.resize(m);
  c.ij.resize(m);
  c.c.resize(m);
  for (std::size_t u = 0; u < m; ++u) {
    const long double f = c.activations[m + u] - z_f;
    const long double i = c.activations[u] - z_i;
    const long double j = c.activations[2 * m + u] - z_j;
    c.fc[u] = fake_rescale(f * (state.c[u] - s.qp_c.zero_point), k.fc);
    c.ij[u] = fake_rescale(i * j, k.ij);
    const long double terms[2] = {static_cast<long double>(c.fc[u] - s.qp_fc.zero_point),
                                  static_cast<long double>(c.ij[u] - s.qp_ij.zero_point)};
    c.c[u] = fake_linear(terms, k.cell);
  }

  std::span<const Code> cell_in = c.c;
  if (s.madnorm) {
    c.nc = madnorm_fakequant_codes(c.c, *k.norm_c).out;
    cell_in = c.nc;
  }
  c.tc.resize(m);
  c.h.resize(m);
  const std::int32_t z_tc = s.cell_table.out_qp.zero_point;
  for (std::size_t u = 0; u < m; ++u) {
    c.tc[u] = eval_pwl_fakequant(cell_in[u], s.cell_table);
    const long double o = c.activations[3 * m + u] - z_o;
    c.h[u] = fake_rescale(o * (c.tc[u] - z_tc), k.h);
  }
  return c;
}

Code eval_activation_float(Code q, const PwlTable& t) {
  if (!t.activation) throw ValidationError("table has no named activation");
  return quantize(apply_activation(*t.activation, dequantize(q, t.in_qp)), t.out_qp);
}

CodeSequence lstm_sequence_fakequant(const CodeSequence& xs, const LstmKernel& k,
                                     Direction direction) {
  const std::size_t t_len = xs.size();
  CodeSequence out(t_len);
  QuantLstmState state = QuantLstmState::zeros(k.spec);
  for (std::size_t s = 0; s < t_len; ++s) {
    const std::size_t t = direction == Direction::kForward ? s : t_len - 1 - s;
    LstmCodes c = lstm_step_fakequant_codes(xs[t], state, k);
    state = {c.h, std::move(c.c)};
    out[t] = std::move(c.h);
  }
  return out;
}

BiLstmKernel BiLstmKernel::create(QuantLstmSpec forward, QuantLstmSpec backward) {
  if (!(forward.qp_h == backward.qp_h)) {
    throw ValidationError("bilstm directions must share the hidden-state qparams");
  }
  if (!(forward.qp_x == backward.qp_x)) {
    throw ValidationError("bilstm directions must share the input qparams");
  }
  return {LstmKernel::create(std::move(forward)), LstmKernel::create(std::move(backward))};
}

CodeSequence bilstm_sequence_fakequant(const CodeSequence& xs, const BiLstmKernel& k) {
  const CodeSequence f = lstm_sequence_fakequant(xs, k.forward, Direction::kForward);
  const CodeSequence b = lstm_sequence_fakequant(xs, k.backward, Direction::kBackward);
  CodeSequence out(xs.size());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    out[t] = f[t];
    out[t].insert(out[t].end(), b[t].begin(), b[t].end());
  }
  return out;
}

}  // namespace intrnn
