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

// Integer-only model execution. Compiled into the general-registers-only
// check target; must not contain floating-point code.

#include <string>

#include "intrnn/error.hpp"
#include "intrnn/model.hpp"

namespace intrnn {
namespace {

CodeSequence run_decoder(const CodeSequence& xs, const IntLayer& l, ActivationEvaluator act) {
  const CodeSequence keys = attention_keys_int(xs, *l.attention);
  QuantLstmState state = QuantLstmState::zeros(l.cell->spec);
  CodeSequence out;
  out.reserve(xs.size());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const AttentionCodes a = attention_int_codes(state.h, xs, keys, *l.attention);
    LstmCodes c = lstm_step_int_codes(xs[t], state, *l.cell, a.context, act);
    state.c = std::move(c.c);
    state.h = c.h;
    out.push_back(std::move(c.h));
  }
  return out;
}

}  // namespace

CodeSequence embed_tokens(const IntModel& model, std::span<const std::int32_t> tokens) {
  if (model.input_kind != InputKind::kTokens) throw ValidationError("model takes feature inputs");
  CodeSequence out;
  out.reserve(tokens.size());
  for (std::int32_t t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= model.vocab_size) {
      throw ValidationError("token id out of vocabulary: " + std::to_string(t));
    }
    std::vector<Code> row(model.input_size);
    for (std::size_t c = 0; c < model.input_size; ++c) {
      row[c] = model.embedding.code(static_cast<std::size_t>(t), c);
    }
    out.push_back(std::move(row));
  }
  return out;
}

Logits run(const IntModel& model, std::span<const std::int32_t> tokens,
           ActivationEvaluator activation) {
  return run(model, embed_tokens(model, tokens), activation);
}

Logits run(const IntModel& model, const CodeSequence& frames, ActivationEvaluator activation) {
  if (frames.empty()) throw ValidationError("input sequence is empty");
  const Code lo = 0;
  const Code hi = model.qp_input.quant_max();
  for (const auto& f : frames) {
    if (f.size() != model.input_size) throw ValidationError("input frame width mismatch");
    for (Code q : f) {
      if (q < lo || q > hi) throw ValidationError("input code out of range");
    }
  }

  std::vector<CodeSequence> streams;
  streams.reserve(model.layers.size() + 1);
  streams.push_back(frames);
  Logits logits;
  for (const IntLayer& l : model.layers) {
    const CodeSequence& cur = streams.back();
    CodeSequence out;
    switch (l.kind) {
      case LayerKind::kLstm:
      case LayerKind::kMadNormLstm:
        out = lstm_sequence_int(cur, *l.cell, Direction::kForward, activation);
        break;
      case LayerKind::kBiLstm: {
        out = lstm_sequence_int(cur, *l.cell, Direction::kForward, activation);
        const CodeSequence b = lstm_sequence_int(cur, *l.backward, Direction::kBackward, activation);
        for (std::size_t t = 0; t < cur.size(); ++t) {
          out[t].insert(out[t].end(), b[t].begin(), b[t].end());
        }
        break;
      }
      case LayerKind::kAttentionDecoder:
        out = run_decoder(cur, l, activation);
        break;
      case LayerKind::kResidualAdd: {
        const CodeSequence& src = streams[l.source];
        out.resize(cur.size());
        for (std::size_t t = 0; t < cur.size(); ++t) {
          out[t].resize(cur[t].size());
          for (std::size_t u = 0; u < cur[t].size(); ++u) {
            out[t][u] = l.residual->apply2(cur[t][u] - l.qp_in.zero_point,
                                           src[t][u] - l.qp_source.zero_point);
          }
        }
        break;
      }
      case LayerKind::kProjection: {
        logits.steps = cur.size();
        logits.classes = l.output_width;
        logits.values.reserve(cur.size() * l.output_width);
        std::vector<std::int16_t> x(l.input_width);
        std::vector<std::int32_t> acc(l.output_width);
        for (const auto& v : cur) {
          center_codes(v, l.qp_in.zero_point, x);
          matvec(l.weight, x, acc);
          for (std::size_t r = 0; r < l.output_width; ++r) {
            logits.values.push_back(
                saturate_int32(static_cast<std::int64_t>(acc[r]) + l.bias[r]));
          }
        }
        break;
      }
    }
    streams.push_back(std::move(out));
  }
  return logits;
}

}  // namespace intrnn
