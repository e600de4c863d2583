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

#ifndef INTRNN_ATTENTION_HPP_
#define INTRNN_ATTENTION_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "intrnn/calibration.hpp"
#include "intrnn/lstm.hpp"
#include "intrnn/matrix.hpp"
#include "intrnn/pwl.hpp"
#include "intrnn/quant.hpp"

namespace intrnn {

// Additive attention parameters:
//   e_i = v . tanh(W_q h + W_k enc_i),  alpha = softmax(e),  s = sum_i alpha_i enc_i
struct AttentionWeights {
  std::size_t attention_size = 0;  // m_att
  std::size_t query_size = 0;      // decoder hidden size
  std::size_t key_size = 0;        // encoder hidden size
  std::vector<double> w_q;         // m_att x query_size
  std::vector<double> w_k;         // m_att x key_size
  std::vector<double> v;           // m_att

  void validate() const;
};

AttentionWeights random_attention_weights(std::size_t attention_size, std::size_t query_size,
                                          std::size_t key_size, double scale,
                                          std::mt19937_64& rng);

std::vector<double> softmax_real(std::span<const double> e);

struct AttentionResult {
  std::vector<double> context;
  std::vector<double> alpha;
};

// Records "q", "k", "pre", "e", "shift" (e - max e) and "s".
AttentionResult attention_real(std::span<const double> h_prev, const Sequence& enc,
                               const AttentionWeights& w, StageRecorder* recorder = nullptr);

// ---------------------------------------------------------------------------

// alpha is held as 8-bit codes over [0, 1].
QuantParams alpha_qparams();
QuantParams exp_output_qparams();

// Bitwidth ledger: 8-bit weights, matmul outputs, tanh/exp outputs, alpha and
// context; 16-bit pre-tanh sums, alignments and shifted alignments; 32-bit
// softmax denominator.
struct QuantAttentionSpec {
  std::size_t attention_size = 0;
  std::size_t query_size = 0;
  std::size_t key_size = 0;

  QuantParams qp_h;    // decoder hidden state (query input)
  QuantParams qp_enc;  // encoder hidden states
  QuantMatrix w_q;
  QuantMatrix w_k;
  QuantMatrix v;       // 1 x m_att
  QuantParams qp_q;    // W_q h
  QuantParams qp_k;    // W_k enc_i
  QuantParams qp_pre;  // q + k_i, 16-bit
  QuantParams qp_e;    // alignments, 16-bit
  QuantParams qp_shift;  // e - max e, 16-bit over [min, 0]
  QuantParams qp_s;    // context
  PwlTable tanh_table;  // qp_pre -> 8-bit
  PwlTable exp_table;   // qp_shift -> 8-bit

  // Throws ValidationError if shapes or any stage bitwidth deviate.
  void validate() const;
};

QuantAttentionSpec convert_attention(const AttentionWeights& w, const CalibrationObserver& observer,
                                     std::string_view prefix, const QuantParams& qp_h,
                                     const QuantParams& qp_enc, int pieces);

struct AttentionKernel {
  QuantAttentionSpec spec;
  Requantizer q;
  Requantizer k;
  LinearRequantizer pre;
  Requantizer e;
  Requantizer shift;
  Requantizer s;

  static AttentionKernel create(QuantAttentionSpec spec);
};

struct AttentionCodes {
  std::vector<Code> q;
  CodeSequence keys;     // T x m_att
  CodeSequence pre;      // T x m_att
  CodeSequence tanh;     // T x m_att
  std::vector<Code> e;   // T
  std::vector<Code> shifted;
  std::vector<Code> exp;
  std::int32_t denominator = 0;
  std::vector<Code> alpha;
  std::vector<Code> context;
};

struct SoftmaxCodes {
  std::vector<Code> shifted;
  std::vector<Code> exp;
  std::int32_t denominator = 0;
  std::vector<Code> alpha;
};

// Integer softmax over 16-bit alignments: subtract the maximum, requantize
// to the exp table input, exp by PWL, sum into a 32-bit denominator, then
// alpha_i = round(255 exp_i / denominator).
SoftmaxCodes softmax_int_codes(std::span<const Code> q_e, const AttentionKernel& k);
std::vector<Code> softmax_int(std::span<const Code> q_e, const AttentionKernel& k);
SoftmaxCodes softmax_fakequant_codes(std::span<const Code> q_e, const AttentionKernel& k);

// Projected encoder states W_k enc_i; independent of the decoder step.
CodeSequence attention_keys_int(const CodeSequence& q_enc, const AttentionKernel& k);

AttentionCodes attention_int_codes(std::span<const Code> q_h, const CodeSequence& q_enc,
                                   const CodeSequence& keys, const AttentionKernel& k);
AttentionCodes attention_int_codes(std::span<const Code> q_h, const CodeSequence& q_enc,
                                   const AttentionKernel& k);
AttentionCodes attention_fakequant_codes(std::span<const Code> q_h, const CodeSequence& q_enc,
                                         const AttentionKernel& k);

// Adds the context term W_s s to the gate sums of a cell with a context
// input: the third matmul is requantized and rescaled into each gate block's
// qparams together with the other two terms.
std::vector<Code> inject_context(std::span<const Code> q_mx, std::span<const Code> q_mh,
                                 std::span<const Code> q_s, const LstmKernel& cell);

}  // namespace intrnn

#endif  // INTRNN_ATTENTION_HPP_
