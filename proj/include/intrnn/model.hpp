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

#ifndef INTRNN_MODEL_HPP_
#define INTRNN_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "intrnn/attention.hpp"
#include "intrnn/calibration.hpp"
#include "intrnn/lstm.hpp"
#include "intrnn/matrix.hpp"

namespace intrnn {

enum class LayerKind {
  kLstm,
  kMadNormLstm,
  kBiLstm,
  kAttentionDecoder,
  kResidualAdd,
  kProjection,
};

std::string_view layer_kind_name(LayerKind kind);
// Throws ValidationError for unknown names.
LayerKind parse_layer_kind(std::string_view name);

enum class InputKind { kTokens, kFeatures };

// Layers transform a stream of per-step vectors. Stream 0 is the embedded
// (or raw feature) input and stream i + 1 is the output of layer i.
//
//   lstm, madnorm_lstm   cell over the stream
//   bilstm               [forward h; backward h] per step
//   attention_decoder    cell whose gates also see the attention context
//                        over the layer's own input sequence
//   residual_add         current stream + stream `source`
//   projection           W x + b, the final layer; integer logits
struct FloatLayer {
  LayerKind kind = LayerKind::kLstm;
  LstmWeights cell;
  LstmWeights backward;
  AttentionWeights attention;
  std::size_t source = 0;
  std::size_t output_size = 0;
  std::vector<double> weight;  // projection, output_size x input width
  std::vector<double> bias;    // projection
};

struct FloatModel {
  InputKind input_kind = InputKind::kTokens;
  std::size_t vocab_size = 0;  // token inputs
  std::size_t input_size = 0;  // embedding or feature width
  std::vector<double> embedding;  // vocab_size x input_size
  std::vector<FloatLayer> layers;

  // Throws ValidationError unless widths chain and the last layer is a
  // projection.
  void validate() const;
  // Width of every stream; streams[0] is the input.
  std::vector<std::size_t> stream_widths() const;
  std::size_t output_size() const { return layers.back().output_size; }
};

// Exactly one of the two is used, according to the model's input kind.
struct ModelInput {
  std::vector<std::int32_t> tokens;
  Sequence features;

  std::size_t length() const { return tokens.empty() ? features.size() : tokens.size(); }
};

struct RandomModelConfig {
  InputKind input_kind = InputKind::kTokens;
  std::size_t vocab_size = 32;
  std::size_t input_size = 16;
  std::size_t hidden_size = 16;
  std::size_t attention_size = 8;
  std::size_t output_size = 32;
  std::vector<LayerKind> layers = {LayerKind::kLstm, LayerKind::kLstm};
  double weight_scale = 0.5;
};

// Uniform random weights. A projection is appended when the layer list does
// not end with one; residual adds take the nearest earlier stream of the same
// width.
FloatModel random_model(const RandomModelConfig& config, std::mt19937_64& rng);

// Real-arithmetic forward pass; logits per step. Records "input" and
// "layer<i>.<stage>" for every stage.
Sequence forward_real(const FloatModel& model, const ModelInput& input,
                      StageRecorder* recorder = nullptr);

// Running min/max of every stage over all inputs. Throws ValidationError for
// an empty stream.
CalibrationObserver calibrate(const FloatModel& model, std::span<const ModelInput> inputs);

// ---------------------------------------------------------------------------

struct ConvertOptions {
  int pieces = 32;
  int cell_bits = 16;
  int gate_bits = 8;
};

struct IntLayer {
  LayerKind kind = LayerKind::kLstm;
  QuantParams qp_in;
  QuantParams qp_out;  // unused for the projection
  std::size_t input_width = 0;
  std::size_t output_width = 0;
  std::optional<LstmKernel> cell;
  std::optional<LstmKernel> backward;
  std::optional<AttentionKernel> attention;
  std::size_t source = 0;
  std::optional<LinearRequantizer> residual;  // current, source -> out
  QuantParams qp_source;
  QuantMatrix weight;               // projection
  std::vector<std::int32_t> bias;   // projection, scale S_w * S_in
};

struct IntModel {
  InputKind input_kind = InputKind::kTokens;
  std::size_t vocab_size = 0;
  std::size_t input_size = 0;
  QuantParams qp_input;
  QuantMatrix embedding;  // token inputs
  std::vector<IntLayer> layers;
  ConvertOptions options;

  // Throws ValidationError unless every consumer's input qparams equal its
  // producer's output qparams and all shapes agree.
  void validate() const;
  std::size_t output_size() const { return layers.back().output_width; }
  // Real value of one logit unit (S_w * S_in of the projection).
  double logit_scale() const;
};

// Builds the integer model. Throws ValidationError naming the stage when a
// calibrated range is missing or degenerate.
IntModel convert(const FloatModel& model, const CalibrationObserver& observer,
                 const ConvertOptions& options);

// Real model whose weights are the dequantized integer weights.
FloatModel dequantize_model(const IntModel& model);

// (q_cur - Z_cur), (q_src - Z_src) -> out.
LinearRequantizer residual_requantizer(const QuantParams& current, const QuantParams& source,
                                       const QuantParams& out);

// 32-bit integer logits, steps x classes, row-major.
struct Logits {
  std::size_t steps = 0;
  std::size_t classes = 0;
  std::vector<std::int32_t> values;

  std::span<const std::int32_t> step(std::size_t t) const {
    return {values.data() + t * classes, classes};
  }
  bool operator==(const Logits&) const = default;
};

// Input codes of each step: embedding rows for tokens. Throws ValidationError
// for out-of-vocabulary ids and empty input.
CodeSequence embed_tokens(const IntModel& model, std::span<const std::int32_t> tokens);
// Features quantized with the model's input qparams (floating point).
CodeSequence quantize_features(const IntModel& model, const Sequence& features);

// Integer-only inference. `activation` replaces the cell activation tables
// (benchmark baselines); null means the PWL tables.
Logits run(const IntModel& model, std::span<const std::int32_t> tokens,
           ActivationEvaluator activation = nullptr);
Logits run(const IntModel& model, const CodeSequence& frames,
           ActivationEvaluator activation = nullptr);

// Fake-quantization reference of run.
Logits run_fakequant(const IntModel& model, const CodeSequence& frames);

}  // namespace intrnn

#endif  // INTRNN_MODEL_HPP_
