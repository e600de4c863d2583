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

#include "intrnn/madnorm.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "intrnn/error.hpp"
#include "intrnn/float_audit.hpp"

namespace intrnn {

std::vector<double> layernorm_real(std::span<const double> x, double epsilon) {
  if (x.empty()) throw ValidationError("layernorm of an empty vector");
  float_audit::record(5 * x.size());
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double variance = 0.0;
  for (double v : x) variance += (v - mean) * (v - mean);
  variance /= n;
  const double denom = std::sqrt(variance + epsilon);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) / denom;
  return y;
}

std::vector<double> madnorm_real(std::span<const double> x, StageRecorder* recorder) {
  if (x.empty()) throw ValidationError("madnorm of an empty vector");
  float_audit::record(5 * x.size());
  const double n = static_cast<double>(x.size());
  // Mean taken relative to x[0] so that a constant vector centers to exact
  // zeros instead of rounding noise.
  double shifted = 0.0;
  for (double v : x) shifted += v - x[0];
  const double mean = x[0] + shifted / n;
  std::vector<double> centered(x.size());
  double deviation = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    centered[i] = x[i] - mean;
    deviation += std::abs(centered[i]);
  }
  deviation /= n;
  std::vector<double> y(x.size(), 0.0);
  if (deviation > 0.0) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = centered[i] / deviation;
  }
  record_stage(recorder, "mu", mean);
  record_stage(recorder, "xhat", centered);
  record_stage(recorder, "d", deviation);
  record_stage(recorder, "y", y);
  return y;
}

std::vector<double> madnorm_affine_real(std::span<const double> x, std::span<const double> gamma,
                                        std::span<const double> beta, StageRecorder* recorder) {
  if (gamma.size() != x.size() || beta.size() != x.size()) {
    throw ValidationError("madnorm affine parameters do not match the hidden size");
  }
  std::vector<double> y = madnorm_real(x, recorder);
  float_audit::record(2 * y.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = gamma[i] * y[i] + beta[i];
  record_stage(recorder, "out", y);
  return y;
}

void MadNormQParams::validate() const {
  if (hidden < 1) throw ValidationError("madnorm hidden size must be >= 1");
  if (qp_x.bitwidth != 8 && qp_x.bitwidth != 16) {
    throw ValidationError("madnorm input must be 8- or 16-bit");
  }
  for (const QuantParams* qp : {&qp_mu, &qp_xhat, &qp_d, &qp_y}) {
    if (qp->bitwidth != 8) throw ValidationError("madnorm stages must be 8-bit");
  }
  if (qp_d.min < 0.0 || qp_d.zero_point != 0) {
    throw ValidationError("madnorm deviation range must start at zero");
  }
  if (affine) {
    if (affine->gamma_q.size() != hidden || affine->beta_q.size() != hidden) {
      throw ValidationError("madnorm affine parameters do not match the hidden size");
    }
    if (affine->qp_out.bitwidth != 8) throw ValidationError("madnorm output must be 8-bit");
  }
}

MadNormQParams madnorm_qparams_from(const CalibrationObserver& observer, std::string_view prefix,
                                    const QuantParams& qp_x, std::size_t hidden) {
  const std::string p(prefix);
  MadNormQParams q;
  q.qp_x = qp_x;
  q.qp_mu = observer.qparams(p + ".mu", 8);
  q.qp_xhat = observer.qparams(p + ".xhat", 8);
  q.qp_d = observer.qparams(p + ".d", 8);
  q.qp_y = observer.qparams(p + ".y", 8);
  q.hidden = hidden;
  return q;
}

MadNormKernel MadNormKernel::create(const MadNormQParams& params) {
  params.validate();
  float_audit::record(12);
  MadNormKernel k;
  k.params = params;
  const double h = static_cast<double>(params.hidden);
  k.mean = Requantizer::create(params.qp_x.scale / (params.qp_mu.scale * h), params.qp_mu);
  const double center_ratios[2] = {params.qp_x.scale / params.qp_xhat.scale,
                                   params.qp_mu.scale / params.qp_xhat.scale};
  k.center = LinearRequantizer::create(center_ratios, 0.0, params.qp_xhat);
  k.deviation = Requantizer::create(params.qp_xhat.scale / (params.qp_d.scale * h), params.qp_d);

  const double y_multiplier = params.qp_xhat.scale / (params.qp_y.scale * params.qp_d.scale);
  int exponent = 0;
  std::frexp(y_multiplier, &exponent);
  if (exponent > 31) throw ValidationError("madnorm output multiplier too large");
  k.y_shift = 31 - exponent;
  k.y_coefficient = std::llround(std::ldexp(y_multiplier, k.y_shift));

  if (params.affine) {
    const MadNormAffine& a = *params.affine;
    const double ratios[2] = {a.qp_gamma.scale * params.qp_y.scale / a.qp_out.scale,
                              a.qp_beta.scale / a.qp_out.scale};
    k.affine = LinearRequantizer::create(ratios, 0.0, a.qp_out);
  }
  return k;
}

QuantTensor madnorm_int(const QuantTensor& q_x, const MadNormQParams& params) {
  if (!(q_x.qp == params.qp_x)) {
    throw ValidationError("madnorm input qparams differ from the configured qp_x");
  }
  if (q_x.size() != params.hidden) throw ValidationError("madnorm input size mismatch");
  const MadNormKernel kernel = MadNormKernel::create(params);
  QuantTensor out;
  out.shape = q_x.shape;
  out.qp = params.output_qparams();
  out.data = madnorm_int(q_x.data, kernel);
  return out;
}

MadNormCodes madnorm_fakequant_codes(std::span<const Code> q_x, const MadNormKernel& k) {
  const MadNormQParams& p = k.params;
  const std::size_t n = q_x.size();
  float_audit::record(10 * n);
  MadNormCodes c;
  long double sum = 0.0L;
  for (Code q : q_x) sum += q - p.qp_x.zero_point;
  c.mu = fake_requantize(sum * k.mean.represented(), p.qp_mu.zero_point, 8);

  const long double a = k.center.coefficient(0);
  const long double b = k.center.coefficient(1);
  c.xhat.resize(n);
  long double abs_sum = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    const long double value =
        a * (q_x[i] - p.qp_x.zero_point) - b * (c.mu - p.qp_mu.zero_point);
    c.xhat[i] = fake_requantize(value, p.qp_xhat.zero_point, 8);
    abs_sum += std::abs(c.xhat[i] - p.qp_xhat.zero_point);
  }
  c.d = fake_requantize(abs_sum * k.deviation.represented(), p.qp_d.zero_point, 8);

  const long double y_multiplier =
      std::ldexp(static_cast<long double>(k.y_coefficient), -k.y_shift);
  const long double denominator = std::max<Code>(c.d, 1);
  c.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const long double value = y_multiplier * (c.xhat[i] - p.qp_xhat.zero_point) / denominator;
    c.y[i] = fake_requantize(value, p.qp_y.zero_point, 8);
  }
  if (k.affine) {
    const MadNormAffine& af = *p.affine;
    const long double g = k.affine->coefficient(0);
    const long double bb = k.affine->coefficient(1);
    c.out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const long double value =
          g * static_cast<long double>((af.gamma_q[i] - af.qp_gamma.zero_point) *
                                       (c.y[i] - p.qp_y.zero_point)) +
          bb * (af.beta_q[i] - af.qp_beta.zero_point);
      c.out[i] = fake_requantize(value, af.qp_out.zero_point, 8);
    }
  } else {
    c.out = c.y;
  }
  return c;
}

}  // namespace intrnn
