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

#ifndef INTRNN_LSTM_HPP_
#define INTRNN_LSTM_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "intrnn/calibration.hpp"
#include "intrnn/madnorm.hpp"
#include "intrnn/matrix.hpp"
#include "intrnn/pwl.hpp"
#include "intrnn/quant.hpp"

namespace intrnn {

using Sequence = std::vector<std::vector<double>>;
using CodeSequence = std::vector<std::vector<Code>>;

// Gate blocks are stored in the order input, forget, candidate, output.
enum Gate : std::size_t { kInputGate = 0, kForgetGate = 1, kCandidate = 2, kOutputGate = 3 };

// Real-valued LSTM parameters. Matrices are row-major with 4m rows.
//
// With madnorm set, W_x x and W_h h are each normalized (over all 4m rows)
// before the gate sum, and c is normalized before the output tanh:
//
//   gates = N(W_x x) + N(W_h h) + b [+ W_s s]
//   h     = o * tanh(N(c))
struct LstmWeights {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  std::size_t context_size = 0;  // width of the attention context, 0 if none
  bool madnorm = false;
  std::vector<double> w_x;  // 4m x n
  std::vector<double> w_h;  // 4m x m
  std::vector<double> w_s;  // 4m x context_size
  std::vector<double> bias; // 4m

  void validate() const;
};

// Uniform(-scale, scale) weights and biases.
LstmWeights random_lstm_weights(std::size_t input_size, std::size_t hidden_size, double scale,
                                std::mt19937_64& rng, bool madnorm = false,
                                std::size_t context_size = 0);

struct LstmState {
  std::vector<double> h;
  std::vector<double> c;

  static LstmState zeros(std::size_t hidden_size) {
    return {std::vector<double>(hidden_size, 0.0), std::vector<double>(hidden_size, 0.0)};
  }
};

// One step of the real-arithmetic cell. Records the stages "mx", "mh", "ms",
// "gate.i", "gate.f", "gate.j", "gate.o", "fc", "ij", "c" and "h", plus the
// normalizer stages under "nx", "nh" and "nc" for MadNorm cells.
LstmState lstm_step_real(std::span<const double> x, const LstmState& state, const LstmWeights& w,
                         std::span<const double> context = {}, StageRecorder* recorder = nullptr);

enum class Direction { kForward, kBackward };

// Runs the cell over a sequence from zero state. Outputs are in input order
// for both directions.
Sequence lstm_sequence_real(const Sequence& xs, const LstmWeights& w,
                            Direction direction = Direction::kForward,
                            StageRecorder* recorder = nullptr);

// Forward and backward cells over the same input, concatenated per step as
// [forward h; backward h].
Sequence bilstm_sequence_real(const Sequence& xs, const LstmWeights& forward,
                              const LstmWeights& backward, StageRecorder* recorder = nullptr);

// ---------------------------------------------------------------------------

// Output ranges of the quantized activations. They are fixed by the
// functions themselves rather than calibrated.
QuantParams sigmoid_output_qparams();
QuantParams tanh_output_qparams();

// Quantization parameters, integer weights and activation tables of one
// cell. The hidden state is always 8-bit; the cell state and the two
// elementwise products are cell_bits wide.
struct QuantLstmSpec {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  std::size_t context_size = 0;
  bool madnorm = false;
  int cell_bits = 16;

  QuantParams qp_x;
  QuantParams qp_h;
  QuantParams qp_s;   // context input
  QuantParams qp_mx;  // W_x x (+ b for plain cells)
  QuantParams qp_mh;  // W_h h
  QuantParams qp_ms;  // W_s s
  std::array<QuantParams, 4> qp_gate;
  QuantParams qp_fc;  // f * c_{t-1}
  QuantParams qp_ij;  // i * j
  QuantParams qp_c;

  QuantMatrix w_x;
  QuantMatrix w_h;
  QuantMatrix w_s;
  // Plain cells: scale S_wx * S_x, added to the W_x x accumulator.
  // MadNorm cells: scale of the normalized W_x x, added to its centered codes.
  std::vector<std::int32_t> bias;

  std::optional<MadNormQParams> norm_x;
  std::optional<MadNormQParams> norm_h;
  std::optional<MadNormQParams> norm_c;

  // One table per gate block (sigmoid, sigmoid, tanh, sigmoid) and one for
  // the cell output tanh; each block has its own input range.
  std::array<PwlTable, 4> gate_tables;
  PwlTable cell_table;

  // Throws ValidationError when shapes or bitwidths are inconsistent.
  void validate() const;
  // qparams of the value fed to the output tanh.
  const QuantParams& cell_table_input() const {
    return norm_c ? norm_c->output_qparams() : qp_c;
  }
};

struct LstmConvertOptions {
  int pieces = 32;
  int cell_bits = 16;
  int gate_bits = 8;
};

// Builds the quantized cell from real weights and calibrated ranges stored
// under "<prefix>.<stage>". qp_x and qp_h are given explicitly so that
// producers and consumers (and both directions of a BiLSTM) can share them.
QuantLstmSpec convert_lstm(const LstmWeights& w, const CalibrationObserver& observer,
                           std::string_view prefix, const QuantParams& qp_x,
                           const QuantParams& qp_h, const LstmConvertOptions& options,
                           const QuantParams* qp_s = nullptr);

// Fixed-point constants derived once from a spec.
struct LstmKernel {
  QuantLstmSpec spec;
  Requantizer mx;
  Requantizer mh;
  Requantizer ms;
  std::array<LinearRequantizer, 4> gate;  // mx (or normalized mx), mh, ms -> gate
  Requantizer fc;
  Requantizer ij;
  LinearRequantizer cell;  // fc, ij -> c
  Requantizer h;           // o * tanh(c) -> h
  std::optional<MadNormKernel> norm_x;
  std::optional<MadNormKernel> norm_h;
  std::optional<MadNormKernel> norm_c;

  static LstmKernel create(QuantLstmSpec spec);
};

struct QuantLstmState {
  std::vector<Code> h;
  std::vector<Code> c;

  static QuantLstmState zeros(const QuantLstmSpec& spec) {
    return {std::vector<Code>(spec.hidden_size, spec.qp_h.zero_point),
            std::vector<Code>(spec.hidden_size, spec.qp_c.zero_point)};
  }
};

// Every intermediate code of one step.
struct LstmCodes {
  std::vector<Code> mx;
  std::vector<Code> mh;
  std::vector<Code> ms;
  std::vector<Code> nx;  // normalized mx (MadNorm cells)
  std::vector<Code> nh;
  std::vector<Code> gates;        // 4m pre-activations
  std::vector<Code> activations;  // 4m
  std::vector<Code> fc;
  std::vector<Code> ij;
  std::vector<Code> c;
  std::vector<Code> nc;
  std::vector<Code> tc;  // tanh of the (normalized) cell state
  std::vector<Code> h;
};

// Activation evaluator used by the integer step. The default is the PWL
// table; alternatives exist only for benchmarking.
using ActivationEvaluator = Code (*)(Code, const PwlTable&);

// Integer-only step:
//   mx    = requantize(W_x x + b)            mh = requantize(W_h h)
//   gate  = requantize(a mx + b mh [+ c ms])  per gate block
//   act   = PWL(gate)
//   fc    = requantize(f c_{t-1})            ij = requantize(i j)
//   c     = requantize(a fc + b ij)
//   h     = requantize(o PWL(c))
LstmCodes lstm_step_int_codes(std::span<const Code> q_x, const QuantLstmState& state,
                              const LstmKernel& k, std::span<const Code> q_context = {},
                              ActivationEvaluator activation = nullptr);
QuantLstmState lstm_step_int(std::span<const Code> q_x, const QuantLstmState& state,
                             const LstmKernel& k, std::span<const Code> q_context = {});

// Gate pre-activations from requantized matmul outputs (already normalized
// for MadNorm cells). q_ms may be empty when the cell has no context input.
std::vector<Code> gate_preactivations(std::span<const Code> q_mx, std::span<const Code> q_mh,
                                      std::span<const Code> q_ms, const LstmKernel& k);

// Fake-quantization reference of lstm_step_int_codes.
LstmCodes lstm_step_fakequant_codes(std::span<const Code> q_x, const QuantLstmState& state,
                                    const LstmKernel& k, std::span<const Code> q_context = {});

// quantize(f(dequantize(q))) with the table's named activation, evaluated in
// floating point. Benchmark baseline only.
Code eval_activation_float(Code q, const PwlTable& t);

CodeSequence lstm_sequence_int(const CodeSequence& xs, const LstmKernel& k,
                               Direction direction = Direction::kForward,
                               ActivationEvaluator activation = nullptr);
CodeSequence lstm_sequence_fakequant(const CodeSequence& xs, const LstmKernel& k,
                                     Direction direction = Direction::kForward);

// Forward and backward kernels sharing input and hidden qparams.
struct BiLstmKernel {
  LstmKernel forward;
  LstmKernel backward;

  // Throws ValidationError unless both directions share qp_x and qp_h.
  static BiLstmKernel create(QuantLstmSpec forward, QuantLstmSpec backward);
};

CodeSequence bilstm_sequence_int(const CodeSequence& xs, const BiLstmKernel& k,
                                 ActivationEvaluator activation = nullptr);
CodeSequence bilstm_sequence_fakequant(const CodeSequence& xs, const BiLstmKernel& k);

}  // namespace intrnn

#endif  // INTRNN_LSTM_HPP_
