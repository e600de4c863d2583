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

#ifndef INTRNN_MADNORM_HPP_
#define INTRNN_MADNORM_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "intrnn/calibration.hpp"
#include "intrnn/quant.hpp"

namespace intrnn {

// Standard layer normalization, (x - mean) / sqrt(var + epsilon). Reference
// only; never used on the integer path.
std::vector<double> layernorm_real(std::span<const double> x, double epsilon = 1e-5);

// Mean-absolute-deviation normalization: y_i = (x_i - mean) / d with
// d = mean(|x_i - mean|). A zero deviation yields all zeros.
//
// Records stages "mu", "xhat", "d" and "y" when a recorder is given.
std::vector<double> madnorm_real(std::span<const double> x, StageRecorder* recorder = nullptr);

// madnorm_real followed by gamma * y + beta (recorded as "out").
std::vector<double> madnorm_affine_real(std::span<const double> x, std::span<const double> gamma,
                                        std::span<const double> beta,
                                        StageRecorder* recorder = nullptr);

struct MadNormAffine {
  std::vector<Code> gamma_q;
  std::vector<Code> beta_q;
  QuantParams qp_gamma;
  QuantParams qp_beta;
  QuantParams qp_out;
};

// Quantization parameters of every MadNorm stage. The input may be 8- or
// 16-bit; every other stage is 8-bit. The deviation is non-negative, so its
// range starts at zero and its zero-point is 0.
struct MadNormQParams {
  QuantParams qp_x;
  QuantParams qp_mu;
  QuantParams qp_xhat;
  QuantParams qp_d;
  QuantParams qp_y;
  std::size_t hidden = 0;
  std::optional<MadNormAffine> affine;

  void validate() const;
  // qparams of the normalized output (qp_y, or the affine output).
  const QuantParams& output_qparams() const { return affine ? affine->qp_out : qp_y; }
};

// Reads "<prefix>.mu", "<prefix>.xhat", "<prefix>.d", "<prefix>.y" from an
// observer.
MadNormQParams madnorm_qparams_from(const CalibrationObserver& observer, std::string_view prefix,
                                    const QuantParams& qp_x, std::size_t hidden);

// Integer constants for one MadNorm instance.
struct MadNormKernel {
  MadNormQParams params;
  Requantizer mean;          // sum(q_x - Z_x) -> q_mu
  LinearRequantizer center;  // (q_x - Z_x), -(q_mu - Z_mu) -> q_xhat
  Requantizer deviation;     // sum |q_xhat - Z_xhat| -> q_d
  std::int64_t y_coefficient = 0;  // S_xhat / (S_y S_d) = y_coefficient * 2^-y_shift
  int y_shift = 0;
  std::optional<LinearRequantizer> affine;  // (q_g - Z_g)(q_y - Z_y), (q_b - Z_b) -> out

  static MadNormKernel create(const MadNormQParams& params);
};

// Every intermediate code of one normalization.
struct MadNormCodes {
  Code mu = 0;
  std::vector<Code> xhat;
  Code d = 0;
  std::vector<Code> y;
  std::vector<Code> out;  // affine output, or y when there is no affine stage
};

// Integer-only MadNorm:
//   q_mu    = round(S_x / (S_mu H) * sum(q_x - Z_x)) + Z_mu
//   q_xhat  = round(S_x / S_xhat (q_x - Z_x) - S_mu / S_xhat (q_mu - Z_mu)) + Z_xhat
//   q_d     = round(S_xhat / (S_d H) * sum|q_xhat - Z_xhat|) + Z_d
//   q_y     = round(S_xhat / (S_y S_d) (q_xhat - Z_xhat) / max(q_d, 1)) + Z_y
MadNormCodes madnorm_int_codes(std::span<const Code> q_x, const MadNormKernel& kernel);
std::vector<Code> madnorm_int(std::span<const Code> q_x, const MadNormKernel& kernel);
QuantTensor madnorm_int(const QuantTensor& q_x, const MadNormQParams& params);

// Fake-quantization reference of madnorm_int_codes.
MadNormCodes madnorm_fakequant_codes(std::span<const Code> q_x, const MadNormKernel& kernel);

}  // namespace intrnn

#endif  // INTRNN_MADNORM_HPP_
