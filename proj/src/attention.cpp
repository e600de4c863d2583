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

#include "intrnn/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "intrnn/error.hpp"
#include "intrnn/float_audit.hpp"

namespace intrnn {
namespace {

void check_bits(const QuantParams& qp, int bits, const char* what) {
  if (qp.bitwidth != bits) {
    throw ValidationError(std::string("attention ") + what + " must be " + std::to_string(bits) +
                          "-bit");
  }
}

std::vector<double> project(std::span<const double> w, std::span<const double> x,
                            std::size_t rows) {
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < x.size(); ++c) out[r] += w[r * x.size() + c] * x[c];
  }
  return out;
}

Code fake_rescale(long double acc, const Requantizer& r) {
  return fake_requantize(acc * r.represented(), r.zero_point, r.bitwidth);
}

}  // namespace

void AttentionWeights::validate() const {
  if (attention_size < 1 || query_size < 1 || key_size < 1) {
    throw ValidationError("attention dimensions must be >= 1");
  }
  if (attention_size > 16384 || query_size > 16384 || key_size > 16384) {
    throw ValidationError("attention dimensions are limited to 16384");
  }
  if (w_q.size() != attention_size * query_size || w_k.size() != attention_size * key_size ||
      v.size() != attention_size) {
    throw ValidationError("attention weight shapes are inconsistent");
  }
}

AttentionWeights random_attention_weights(std::size_t attention_size, std::size_t query_size,
                                          std::size_t key_size, double scale,
                                          std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-scale, scale);
  AttentionWeights w;
  w.attention_size = attention_size;
  w.query_size = query_size;
  w.key_size = key_size;
  w.w_q.resize(attention_size * query_size);
  w.w_k.resize(attention_size * key_size);
  w.v.resize(attention_size);
  for (auto* v : {&w.w_q, &w.w_k, &w.v}) {
    for (double& x : *v) x = u(rng);
  }
  return w;
}

std::vector<double> softmax_real(std::span<const double> e) {
  if (e.empty()) throw ValidationError("softmax of an empty vector");
  float_audit::record(4 * e.size());
  const double top = *std::max_element(e.begin(), e.end());
  std::vector<double> out(e.size());
  double total = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    out[i] = std::exp(e[i] - top);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

AttentionResult attention_real(std::span<const double> h_prev, const Sequence& enc,
                               const AttentionWeights& w, StageRecorder* recorder) {
  if (enc.empty()) throw ValidationError("attention needs at least one encoder state");
  if (h_prev.size() != w.query_size) throw ValidationError("attention query size mismatch");
  const std::size_t m = w.attention_size;
  const std::size_t T = enc.size();
  float_audit::record(2 * m * (w.query_size + T * (w.key_size + 2)) + 2 * T * w.key_size);

  const std::vector<double> q = project(w.w_q, h_prev, m);
  record_stage(recorder, "q", q);
  std::vector<double> e(T, 0.0);
  for (std::size_t i = 0; i < T; ++i) {
    if (enc[i].size() != w.key_size) throw ValidationError("attention key size mismatch");
    const std::vector<double> k = project(w.w_k, enc[i], m);
    std::vector<double> pre(m);
    for (std::size_t a = 0; a < m; ++a) {
      pre[a] = q[a] + k[a];
      e[i] += w.v[a] * std::tanh(pre[a]);
    }
    record_stage(recorder, "k", k);
    record_stage(recorder, "pre", pre);
  }
  record_stage(recorder, "e", e);
  const double top = *std::max_element(e.begin(), e.end());
  std::vector<double> shifted(T);
  for (std::size_t i = 0; i < T; ++i) shifted[i] = e[i] - top;
  record_stage(recorder, "shift", shifted);

  AttentionResult r;
  r.alpha = softmax_real(e);
  r.context.assign(w.key_size, 0.0);
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t u = 0; u < w.key_size; ++u) r.context[u] += r.alpha[i] * enc[i][u];
  }
  record_stage(recorder, "s", r.context);
  return r;
}

// ---------------------------------------------------------------------------

QuantParams alpha_qparams() { return compute_qparams(0.0, 1.0, 8); }
QuantParams exp_output_qparams() { return compute_qparams(0.0, 1.0, 8); }

void QuantAttentionSpec::validate() const {
  if (attention_size < 1 || query_size < 1 || key_size < 1) {
    throw ValidationError("attention dimensions must be >= 1");
  }
  check_bits(qp_h, 8, "query input");
  check_bits(qp_enc, 8, "encoder states");
  check_bits(qp_q, 8, "query projection");
  check_bits(qp_k, 8, "key projection");
  check_bits(qp_pre, 16, "pre-tanh sum");
  check_bits(qp_e, 16, "alignments");
  check_bits(qp_shift, 16, "shifted alignments");
  check_bits(qp_s, 8, "context");
  if (qp_shift.max != 0.0) throw ValidationError("shifted alignment range must end at zero");
  if (w_q.rows != attention_size || w_q.cols != query_size || w_k.rows != attention_size ||
      w_k.cols != key_size || v.rows != 1 || v.cols != attention_size) {
    throw ValidationError("attention weight shapes are inconsistent");
  }
  tanh_table.validate();
  exp_table.validate();
  if (!(tanh_table.in_qp == qp_pre) || !(tanh_table.out_qp == tanh_output_qparams())) {
    throw ValidationError("attention tanh table does not match its qparams");
  }
  if (!(exp_table.in_qp == qp_shift) || !(exp_table.out_qp == exp_output_qparams())) {
    throw ValidationError("attention exp table does not match its qparams");
  }
}

QuantAttentionSpec convert_attention(const AttentionWeights& w, const CalibrationObserver& observer,
                                     std::string_view prefix, const QuantParams& qp_h,
                                     const QuantParams& qp_enc, int pieces) {
  w.validate();
  const std::string p(prefix);
  QuantAttentionSpec s;
  s.attention_size = w.attention_size;
  s.query_size = w.query_size;
  s.key_size = w.key_size;
  s.qp_h = qp_h;
  s.qp_enc = qp_enc;
  s.w_q = QuantMatrix::quantize(w.w_q, w.attention_size, w.query_size);
  s.w_k = QuantMatrix::quantize(w.w_k, w.attention_size, w.key_size);
  s.v = QuantMatrix::quantize(w.v, 1, w.attention_size);
  s.qp_q = observer.qparams(p + ".q", 8);
  s.qp_k = observer.qparams(p + ".k", 8);
  s.qp_pre = observer.qparams(p + ".pre", 16);
  s.qp_e = observer.qparams(p + ".e", 16);
  s.qp_shift = observer.qparams(p + ".shift", 16);
  s.qp_s = observer.qparams(p + ".s", 8);
  s.tanh_table = build_pwl(Activation::kTanh, s.qp_pre, tanh_output_qparams(), pieces);
  s.exp_table = build_pwl(Activation::kExp, s.qp_shift, exp_output_qparams(), pieces);
  s.validate();
  return s;
}

AttentionKernel AttentionKernel::create(QuantAttentionSpec spec) {
  spec.validate();
  float_audit::record(16);
  const QuantAttentionSpec& s = spec;
  AttentionKernel k;
  k.q = Requantizer::create(s.w_q.qp.scale * s.qp_h.scale / s.qp_q.scale, s.qp_q);
  k.k = Requantizer::create(s.w_k.qp.scale * s.qp_enc.scale / s.qp_k.scale, s.qp_k);
  const double ratios[2] = {s.qp_q.scale / s.qp_pre.scale, s.qp_k.scale / s.qp_pre.scale};
  k.pre = LinearRequantizer::create(ratios, 0.0, s.qp_pre);
  k.e = Requantizer::create(s.v.qp.scale * s.tanh_table.out_qp.scale / s.qp_e.scale, s.qp_e);
  k.shift = Requantizer::create(s.qp_e.scale / s.qp_shift.scale, s.qp_shift);
  k.s = Requantizer::create(alpha_qparams().scale * s.qp_enc.scale / s.qp_s.scale, s.qp_s);
  k.spec = std::move(spec);
  return k;
}

// ---------------------------------------------------------------------------
// Fake-quantization reference.

SoftmaxCodes softmax_fakequant_codes(std::span<const Code> q_e, const AttentionKernel& k) {
  if (q_e.empty()) throw ValidationError("softmax of an empty vector");
  const QuantAttentionSpec& s = k.spec;
  float_audit::record(6 * q_e.size());
  const Code top = *std::max_element(q_e.begin(), q_e.end());
  SoftmaxCodes c;
  long double total = 0.0L;
  for (Code e : q_e) {
    c.shifted.push_back(fake_rescale(static_cast<long double>(e - top), k.shift));
    c.exp.push_back(eval_pwl_fakequant(c.shifted.back(), s.exp_table));
    total += c.exp.back() - s.exp_table.out_qp.zero_point;
  }
  c.denominator = static_cast<std::int32_t>(total);
  const QuantParams qa = alpha_qparams();
  for (Code x : c.exp) {
    const long double ratio =
        static_cast<long double>(x - s.exp_table.out_qp.zero_point) * qa.quant_max() / total;
    c.alpha.push_back(fake_requantize(ratio, qa.zero_point, qa.bitwidth));
  }
  return c;
}

AttentionCodes attention_fakequant_codes(std::span<const Code> q_h, const CodeSequence& q_enc,
                                         const AttentionKernel& k) {
  const QuantAttentionSpec& s = k.spec;
  const std::size_t m = s.attention_size;
  const std::size_t T = q_enc.size();
  if (T == 0) throw ValidationError("attention needs at least one encoder state");
  if (q_h.size() != s.query_size) throw ValidationError("attention query size mismatch");
  float_audit::record(4 * m * (s.query_size + T * (s.key_size + 2)));

  auto project = [](const QuantMatrix& w, std::span<const Code> x, std::int32_t z,
                    const Requantizer& r) {
    std::vector<Code> out(w.rows);
    for (std::size_t a = 0; a < w.rows; ++a) {
      long double acc = 0.0L;
      for (std::size_t c = 0; c < w.cols; ++c) {
        acc += static_cast<long double>(w.code(a, c) - w.qp.zero_point) * (x[c] - z);
      }
      out[a] = fake_rescale(acc, r);
    }
    return out;
  };

  AttentionCodes c;
  c.q = project(s.w_q, q_h, s.qp_h.zero_point, k.q);
  const std::int32_t z_t = s.tanh_table.out_qp.zero_point;
  for (std::size_t i = 0; i < T; ++i) {
    if (q_enc[i].size() != s.key_size) throw ValidationError("attention key size mismatch");
    c.keys.push_back(project(s.w_k, q_enc[i], s.qp_enc.zero_point, k.k));
    std::vector<Code> pre(m), t(m);
    long double e = 0.0L;
    for (std::size_t a = 0; a < m; ++a) {
      const long double value = k.pre.coefficient(0) * (c.q[a] - s.qp_q.zero_point) +
                                k.pre.coefficient(1) * (c.keys[i][a] - s.qp_k.zero_point);
      pre[a] = fake_requantize(value, s.qp_pre.zero_point, 16);
      t[a] = eval_pwl_fakequant(pre[a], s.tanh_table);
      e += static_cast<long double>(s.v.code(0, a) - s.v.qp.zero_point) * (t[a] - z_t);
    }
    c.pre.push_back(std::move(pre));
    c.tanh.push_back(std::move(t));
    c.e.push_back(fake_rescale(e, k.e));
  }
  SoftmaxCodes sm = softmax_fakequant_codes(c.e, k);
  c.shifted = std::move(sm.shifted);
  c.exp = std::move(sm.exp);
  c.denominator = sm.denominator;
  c.alpha = std::move(sm.alpha);
  c.context.resize(s.key_size);
  for (std::size_t u = 0; u < s.key_size; ++u) {
    long double acc = 0.0L;
    for (std::size_t i = 0; i < T; ++i) {
      acc += static_cast<long double>(c.alpha[i]) * (q_enc[i][u] - s.qp_enc.zero_point);
    }
    c.context[u] = fake_rescale(acc, k.s);
  }
  return c;
}

}  // namespace intrnn
