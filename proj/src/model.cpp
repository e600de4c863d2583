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

#include "intrnn/model.hpp"

#include <cmath>
#include <string>

#include "intrnn/error.hpp"
#include "intrnn/float_audit.hpp"

namespace intrnn {
namespace {

constexpr std::pair<LayerKind, std::string_view> kLayerNames[] = {
    {LayerKind::kLstm, "lstm"},
    {LayerKind::kMadNormLstm, "madnorm_lstm"},
    {LayerKind::kBiLstm, "bilstm"},
    {LayerKind::kAttentionDecoder, "attention_decoder"},
    {LayerKind::kResidualAdd, "residual_add"},
    {LayerKind::kProjection, "projection"},
};

std::string layer_prefix(std::size_t i) { return "layer" + std::to_string(i); }

std::string layer_error(std::size_t i, const std::string& what) {
  return layer_prefix(i) + ": " + what;
}

bool is_cell(LayerKind k) { return k == LayerKind::kLstm || k == LayerKind::kMadNormLstm; }

Sequence decoder_real(const Sequence& xs, const FloatLayer& layer, StageRecorder* recorder) {
  PrefixedRecorder ra(recorder, "attn");
  Sequence out(xs.size());
  LstmState state = LstmState::zeros(layer.cell.hidden_size);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const AttentionResult r = attention_real(state.h, xs, layer.attention, &ra);
    state = lstm_step_real(xs[t], state, layer.cell, r.context, recorder);
    out[t] = state.h;
  }
  return out;
}

QuantParams shared_hidden_qparams(const CalibrationObserver& observer, const std::string& prefix) {
  const RangeObserver* f = observer.find(prefix + ".fwd.h");
  const RangeObserver* b = observer.find(prefix + ".bwd.h");
  if (f == nullptr || b == nullptr) {
    throw ValidationError("calibration stage never observed: " + prefix + ".fwd.h/.bwd.h");
  }
  CalibrationObserver joint;
  joint.set("h", *f);
  CalibrationObserver other;
  other.set("h", *b);
  joint.merge(other);
  try {
    return joint.qparams("h", 8);
  } catch (const ValidationError& e) {
    throw ValidationError("calibration stage '" + prefix + ".h': " + e.what());
  }
}

Code fake_linear2(long double a, long double b, const LinearRequantizer& lr) {
  return fake_requantize(lr.coefficient(0) * a + lr.coefficient(1) * b + lr.offset_value(),
                         lr.zero_point, lr.bitwidth);
}

}  // namespace

std::string_view layer_kind_name(LayerKind kind) {
  for (const auto& [k, name] : kLayerNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view name) {
  for (const auto& [k, n] : kLayerNames) {
    if (n == name) return k;
  }
  throw ValidationError("unknown layer kind: " + std::string(name));
}

std::vector<std::size_t> FloatModel::stream_widths() const {
  std::vector<std::size_t> widths = {input_size};
  for (const FloatLayer& l : layers) {
    switch (l.kind) {
      case LayerKind::kLstm:
      case LayerKind::kMadNormLstm:
      case LayerKind::kAttentionDecoder:
        widths.push_back(l.cell.hidden_size);
        break;
      case LayerKind::kBiLstm:
        widths.push_back(2 * l.cell.hidden_size);
        break;
      case LayerKind::kResidualAdd:
        widths.push_back(widths.back());
        break;
      case LayerKind::kProjection:
        widths.push_back(l.output_size);
        break;
    }
  }
  return widths;
}

void FloatModel::validate() const {
  if (input_size < 1) throw ValidationError("model input size must be >= 1");
  if (input_kind == InputKind::kTokens &&
      (vocab_size < 1 || embedding.size() != vocab_size * input_size)) {
    throw ValidationError("embedding shape is inconsistent");
  }
  if (layers.empty() || layers.back().kind != LayerKind::kProjection) {
    throw ValidationError("the last layer must be a projection");
  }
  const std::vector<std::size_t> widths = stream_widths();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const FloatLayer& l = layers[i];
    const std::size_t width = widths[i];
    if (l.kind == LayerKind::kProjection && i + 1 != layers.size()) {
      throw ValidationError(layer_error(i, "projection must be the last layer"));
    }
    if (is_cell(l.kind) || l.kind == LayerKind::kBiLstm || l.kind == LayerKind::kAttentionDecoder) {
      l.cell.validate();
      if (l.cell.input_size != width) throw ValidationError(layer_error(i, "input width mismatch"));
    }
    switch (l.kind) {
      case LayerKind::kLstm:
      case LayerKind::kMadNormLstm:
        if (l.cell.madnorm != (l.kind == LayerKind::kMadNormLstm) || l.cell.context_size != 0) {
          throw ValidationError(layer_error(i, "cell variant does not match the layer kind"));
        }
        break;
      case LayerKind::kBiLstm:
        l.backward.validate();
        if (l.backward.input_size != width || l.backward.hidden_size != l.cell.hidden_size ||
            l.cell.context_size != 0 || l.backward.context_size != 0) {
          throw ValidationError(layer_error(i, "bilstm directions do not match"));
        }
        break;
      case LayerKind::kAttentionDecoder:
        l.attention.validate();
        if (l.cell.context_size != width || l.attention.key_size != width ||
            l.attention.query_size != l.cell.hidden_size) {
          throw ValidationError(layer_error(i, "attention shapes do not match the decoder"));
        }
        break;
      case LayerKind::kResidualAdd:
        if (l.source >= i || widths[l.source] != width) {
          throw ValidationError(layer_error(i, "residual source must be an earlier stream of the same width"));
        }
        break;
      case LayerKind::kProjection:
        if (l.output_size < 1 || l.weight.size() != l.output_size * width ||
            l.bias.size() != l.output_size) {
          throw ValidationError(layer_error(i, "projection shape is inconsistent"));
        }
        break;
    }
  }
}

FloatModel random_model(const RandomModelConfig& config, std::mt19937_64& rng) {
  FloatModel m;
  m.input_kind = config.input_kind;
  m.input_size = config.input_size;
  std::uniform_real_distribution<double> u(-config.weight_scale, config.weight_scale);
  if (config.input_kind == InputKind::kTokens) {
    m.vocab_size = config.vocab_size;
    m.embedding.resize(config.vocab_size * config.input_size);
    std::uniform_real_distribution<double> e(-1.0, 1.0);
    for (double& v : m.embedding) v = e(rng);
  }
  std::vector<LayerKind> kinds = config.layers;
  if (kinds.empty() || kinds.back() != LayerKind::kProjection) kinds.push_back(LayerKind::kProjection);

  std::vector<std::size_t> widths = {config.input_size};
  const double s = config.weight_scale;
  for (LayerKind kind : kinds) {
    FloatLayer l;
    l.kind = kind;
    const std::size_t width = widths.back();
    const std::size_t h = config.hidden_size;
    switch (kind) {
      case LayerKind::kLstm:
      case LayerKind::kMadNormLstm:
        l.cell = random_lstm_weights(width, h, s, rng, kind == LayerKind::kMadNormLstm);
        widths.push_back(h);
        break;
      case LayerKind::kBiLstm:
        l.cell = random_lstm_weights(width, h, s, rng);
        l.backward = random_lstm_weights(width, h, s, rng);
        widths.push_back(2 * h);
        break;
      case LayerKind::kAttentionDecoder:
        l.cell = random_lstm_weights(width, h, s, rng, false, width);
        l.attention = random_attention_weights(config.attention_size, h, width, s, rng);
        widths.push_back(h);
        break;
      case LayerKind::kResidualAdd: {
        std::size_t j = widths.size() - 1;
        while (j > 0 && widths[j - 1] != width) --j;
        if (j == 0) throw ValidationError("residual add has no earlier stream of the same width");
        l.source = j - 1;
        widths.push_back(width);
        break;
      }
      case LayerKind::kProjection:
        l.output_size = config.output_size;
        l.weight.resize(config.output_size * width);
        l.bias.resize(config.output_size);
        for (double& v : l.weight) v = u(rng);
        for (double& v : l.bias) v = u(rng);
        widths.push_back(config.output_size);
        break;
    }
    m.layers.push_back(std::move(l));
  }
  m.validate();
  return m;
}

Sequence forward_real(const FloatModel& model, const ModelInput& input, StageRecorder* recorder) {
  model.validate();
  if (input.length() == 0) throw ValidationError("input sequence is empty");
  Sequence x;
  if (model.input_kind == InputKind::kTokens) {
    for (std::int32_t t : input.tokens) {
      if (t < 0 || static_cast<std::size_t>(t) >= model.vocab_size) {
        throw ValidationError("token id out of vocabulary: " + std::to_string(t));
      }
      const auto row = model.embedding.begin() + t * model.input_size;
      x.emplace_back(row, row + model.input_size);
    }
  } else {
    x = input.features;
    for (const auto& f : x) {
      if (f.size() != model.input_size) throw ValidationError("feature width mismatch");
    }
  }
  for (const auto& v : x) record_stage(recorder, "input", v);

  std::vector<Sequence> streams = {std::move(x)};
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const FloatLayer& l = model.layers[i];
    const Sequence& cur = streams.back();
    PrefixedRecorder rec(recorder, layer_prefix(i));
    Sequence out;
    switch (l.kind) {
      case LayerKind::kLstm:
      case LayerKind::kMadNormLstm:
        out = lstm_sequence_real(cur, l.cell, Direction::kForward, &rec);
        break;
      case LayerKind::kBiLstm:
        out = bilstm_sequence_real(cur, l.cell, l.backward, &rec);
        break;
      case LayerKind::kAttentionDecoder:
        out = decoder_real(cur, l, &rec);
        break;
      case LayerKind::kResidualAdd:
        out = cur;
        float_audit::record(cur.size() * cur[0].size());
        for (std::size_t t = 0; t < cur.size(); ++t) {
          for (std::size_t u = 0; u < cur[t].size(); ++u) out[t][u] += streams[l.source][t][u];
          rec.record("out", out[t]);
        }
        break;
      case LayerKind::kProjection: {
        const std::size_t width = cur[0].size();
        float_audit::record(2 * cur.size() * l.output_size * width);
        for (const auto& v : cur) {
          std::vector<double> y(l.bias);
          for (std::size_t r = 0; r < l.output_size; ++r) {
            for (std::size_t c = 0; c < width; ++c) y[r] += l.weight[r * width + c] * v[c];
          }
          out.push_back(std::move(y));
        }
        break;
      }
    }
    streams.push_back(std::move(out));
  }
  return std::move(streams.back());
}

CalibrationObserver calibrate(const FloatModel& model, std::span<const ModelInput> inputs) {
  if (inputs.empty()) throw ValidationError("no input sequences; calibration stage never observed: input");
  CalibrationObserver observer;
  for (const ModelInput& in : inputs) forward_real(model, in, &observer);
  return observer;
}

// ---------------------------------------------------------------------------

IntModel convert(const FloatModel& model, const CalibrationObserver& observer,
                 const ConvertOptions& options) {
  model.validate();
  if (options.pieces < 1) throw ValidationError("number of pieces must be >= 1");
  IntModel im;
  im.input_kind = model.input_kind;
  im.vocab_size = model.vocab_size;
  im.input_size = model.input_size;
  im.options = options;
  if (model.input_kind == InputKind::kTokens) {
    im.embedding = QuantMatrix::quantize(model.embedding, model.vocab_size, model.input_size);
    im.qp_input = im.embedding.qp;
  } else {
    im.qp_input = observer.qparams("input", 8);
  }
  const LstmConvertOptions lopt{options.pieces, options.cell_bits, options.gate_bits};
  const std::vector<std::size_t> widths = model.stream_widths();
  std::vector<QuantParams> stream_qp = {im.qp_input};

  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const FloatLayer& l = model.layers[i];
    const std::string p = layer_prefix(i);
    IntLayer L;
    L.kind = l.kind;
    L.qp_in = stream_qp[i];
    L.input_width = widths[i];
    L.output_width = widths[i + 1];
    switch (l.kind) {
      case LayerKind::kLstm:
      case LayerKind::kMadNormLstm: {
        L.qp_out = observer.qparams(p + ".h", 8);
        L.cell = LstmKernel::create(convert_lstm(l.cell, observer, p, L.qp_in, L.qp_out, lopt));
        break;
      }
      case LayerKind::kBiLstm: {
        L.qp_out = shared_hidden_qparams(observer, p);
        const BiLstmKernel k = BiLstmKernel::create(
            convert_lstm(l.cell, observer, p + ".fwd", L.qp_in, L.qp_out, lopt),
            convert_lstm(l.backward, observer, p + ".bwd", L.qp_in, L.qp_out, lopt));
        L.cell = k.forward;
        L.backward = k.backward;
        break;
      }
      case LayerKind::kAttentionDecoder: {
        L.qp_out = observer.qparams(p + ".h", 8);
        L.attention = AttentionKernel::create(
            convert_attention(l.attention, observer, p + ".attn", L.qp_out, L.qp_in, options.pieces));
        L.cell = LstmKernel::create(convert_lstm(l.cell, observer, p, L.qp_in, L.qp_out, lopt,
                                                 &L.attention->spec.qp_s));
        break;
      }
      case LayerKind::kResidualAdd: {
        L.qp_out = observer.qparams(p + ".out", 8);
        L.source = l.source;
        L.qp_source = stream_qp[l.source];
        L.residual = residual_requantizer(L.qp_in, L.qp_source, L.qp_out);
        break;
      }
      case LayerKind::kProjection: {
        L.weight = QuantMatrix::quantize(l.weight, l.output_size, widths[i]);
        const double scale = L.weight.qp.scale * L.qp_in.scale;
        L.bias.resize(l.output_size);
        for (std::size_t r = 0; r < l.output_size; ++r) {
          L.bias[r] = saturate_int32(std::llround(l.bias[r] / scale));
        }
        break;
      }
    }
    stream_qp.push_back(L.qp_out);
    im.layers.push_back(std::move(L));
  }
  im.validate();
  return im;
}

LinearRequantizer residual_requantizer(const QuantParams& current, const QuantParams& source,
                                       const QuantParams& out) {
  const double ratios[2] = {current.scale / out.scale, source.scale / out.scale};
  return LinearRequantizer::create(ratios, 0.0, out);
}

void IntModel::validate() const {
  if (input_size < 1) throw ValidationError("model input size must be >= 1");
  if (qp_input.bitwidth != 8) throw ValidationError("model input must be 8-bit");
  if (input_kind == InputKind::kTokens &&
      (vocab_size < 1 || embedding.rows != vocab_size || embedding.cols != input_size ||
       !(embedding.qp == qp_input))) {
    throw ValidationError("embedding does not match the model input");
  }
  if (layers.empty() || layers.back().kind != LayerKind::kProjection) {
    throw ValidationError("the last layer must be a projection");
  }
  std::vector<std::size_t> widths = {input_size};
  std::vector<QuantParams> qps = {qp_input};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const IntLayer& l = layers[i];
    if (!(l.qp_in == qps[i])) {
      throw ValidationError(layer_error(i, "input qparams differ from the producer's output"));
    }
    if (l.input_width != widths[i]) throw ValidationError(layer_error(i, "input width mismatch"));
    auto need = [&](bool ok, const char* what) {
      if (!ok) throw ValidationError(layer_error(i, what));
    };
    switch (l.kind) {
      case LayerKind::kLstm:
      case LayerKind::kMadNormLstm:
      case LayerKind::kBiLstm:
      case LayerKind::kAttentionDecoder: {
        need(l.cell.has_value(), "missing cell");
        const QuantLstmSpec& s = l.cell->spec;
        need(s.qp_x == l.qp_in && s.input_size == l.input_width, "cell input does not match");
        need(s.qp_h == l.qp_out, "cell hidden qparams differ from the layer output");
        const bool madnorm = l.kind == LayerKind::kMadNormLstm;
        if (l.kind != LayerKind::kBiLstm && l.kind != LayerKind::kAttentionDecoder) {
          need(s.madnorm == madnorm, "cell variant does not match the layer kind");
        }
        if (l.kind == LayerKind::kBiLstm) {
          need(l.backward.has_value(), "missing backward cell");
          const QuantLstmSpec& b = l.backward->spec;
          need(b.qp_x == s.qp_x && b.qp_h == s.qp_h && b.hidden_size == s.hidden_size &&
                   b.input_size == s.input_size,
               "bilstm directions do not share qparams");
          need(l.output_width == 2 * s.hidden_size, "output width mismatch");
        } else {
          need(l.output_width == s.hidden_size, "output width mismatch");
        }
        if (l.kind == LayerKind::kAttentionDecoder) {
          need(l.attention.has_value(), "missing attention");
          const QuantAttentionSpec& a = l.attention->spec;
          need(a.qp_enc == l.qp_in && a.key_size == l.input_width, "attention keys do not match");
          need(a.qp_h == s.qp_h && a.query_size == s.hidden_size, "attention query does not match");
          need(s.context_size == a.key_size && s.qp_s == a.qp_s, "context does not match the cell");
        } else {
          need(s.context_size == 0, "unexpected context input");
        }
        break;
      }
      case LayerKind::kResidualAdd:
        need(l.source < i && widths[l.source] == l.input_width, "bad residual source");
        need(l.qp_source == qps[l.source], "residual source qparams differ from the producer");
        need(l.residual.has_value() && l.output_width == l.input_width, "bad residual");
        need(l.qp_out.bitwidth == 8, "residual output must be 8-bit");
        break;
      case LayerKind::kProjection:
        need(i + 1 == layers.size(), "projection must be the last layer");
        need(l.weight.rows == l.output_width && l.weight.cols == l.input_width &&
                 l.bias.size() == l.output_width,
             "projection shape is inconsistent");
        break;
    }
    widths.push_back(l.output_width);
    qps.push_back(l.qp_out);
  }
}

double IntModel::logit_scale() const {
  const IntLayer& l = layers.back();
  return l.weight.qp.scale * l.qp_in.scale;
}

FloatModel dequantize_model(const IntModel& im) {
  im.validate();
  FloatModel m;
  m.input_kind = im.input_kind;
  m.vocab_size = im.vocab_size;
  m.input_size = im.input_size;
  if (im.input_kind == InputKind::kTokens) m.embedding = im.embedding.dequantized();

  auto cell_weights = [](const LstmKernel& k) {
    const QuantLstmSpec& s = k.spec;
    LstmWeights w;
    w.input_size = s.input_size;
    w.hidden_size = s.hidden_size;
    w.context_size = s.context_size;
    w.madnorm = s.madnorm;
    w.w_x = s.w_x.dequantized();
    w.w_h = s.w_h.dequantized();
    if (s.context_size > 0) w.w_s = s.w_s.dequantized();
    const double scale =
        s.madnorm ? s.norm_x->output_qparams().scale : s.w_x.qp.scale * s.qp_x.scale;
    float_audit::record(s.bias.size());
    for (std::int32_t b : s.bias) w.bias.push_back(b * scale);
    return w;
  };

  for (const IntLayer& l : im.layers) {
    FloatLayer f;
    f.kind = l.kind;
    if (l.cell) f.cell = cell_weights(*l.cell);
    if (l.backward) f.backward = cell_weights(*l.backward);
    if (l.attention) {
      const QuantAttentionSpec& a = l.attention->spec;
      f.attention.attention_size = a.attention_size;
      f.attention.query_size = a.query_size;
      f.attention.key_size = a.key_size;
      f.attention.w_q = a.w_q.dequantized();
      f.attention.w_k = a.w_k.dequantized();
      f.attention.v = a.v.dequantized();
    }
    f.source = l.source;
    if (l.kind == LayerKind::kProjection) {
      f.output_size = l.output_width;
      f.weight = l.weight.dequantized();
      const double scale = l.weight.qp.scale * l.qp_in.scale;
      for (std::int32_t b : l.bias) f.bias.push_back(b * scale);
    }
    m.layers.push_back(std::move(f));
  }
  m.validate();
  return m;
}

CodeSequence quantize_features(const IntModel& model, const Sequence& features) {
  CodeSequence out;
  for (const auto& f : features) {
    if (f.size() != model.input_size) throw ValidationError("feature width mismatch");
    out.push_back(quantize(f, model.qp_input));
  }
  return out;
}

Logits run_fakequant(const IntModel& model, const CodeSequence& frames) {
  if (frames.empty()) throw ValidationError("input sequence is empty");
  std::vector<CodeSequence> streams = {frames};
  Logits logits;
  for (const IntLayer& l : model.layers) {
    const CodeSequence& cur = streams.back();
    CodeSequence out;
    switch (l.kind) {
      case LayerKind::kLstm:
      case LayerKind::kMadNormLstm:
        out = lstm_sequence_fakequant(cur, *l.cell);
        break;
      case LayerKind::kBiLstm: {
        const CodeSequence f = lstm_sequence_fakequant(cur, *l.cell, Direction::kForward);
        const CodeSequence b = lstm_sequence_fakequant(cur, *l.backward, Direction::kBackward);
        for (std::size_t t = 0; t < cur.size(); ++t) {
          out.push_back(f[t]);
          out.back().insert(out.back().end(), b[t].begin(), b[t].end());
        }
        break;
      }
      case LayerKind::kAttentionDecoder: {
        QuantLstmState state = QuantLstmState::zeros(l.cell->spec);
        for (std::size_t t = 0; t < cur.size(); ++t) {
          const AttentionCodes a = attention_fakequant_codes(state.h, cur, *l.attention);
          LstmCodes c = lstm_step_fakequant_codes(cur[t], state, *l.cell, a.context);
          state = {c.h, std::move(c.c)};
          out.push_back(std::move(c.h));
        }
        break;
      }
      case LayerKind::kResidualAdd: {
        const CodeSequence& src = streams[l.source];
        for (std::size_t t = 0; t < cur.size(); ++t) {
          std::vector<Code> v(cur[t].size());
          for (std::size_t u = 0; u < v.size(); ++u) {
            v[u] = fake_linear2(cur[t][u] - l.qp_in.zero_point, src[t][u] - l.qp_source.zero_point,
                                *l.residual);
          }
          out.push_back(std::move(v));
        }
        break;
      }
      case LayerKind::kProjection: {
        logits.steps = cur.size();
        logits.classes = l.output_width;
        float_audit::record(2 * cur.size() * l.output_width * l.input_width);
        for (const auto& x : cur) {
          for (std::size_t r = 0; r < l.output_width; ++r) {
            long double acc = l.bias[r];
            for (std::size_t c = 0; c < l.input_width; ++c) {
              acc += static_cast<long double>(l.weight.code(r, c) - l.weight.qp.zero_point) *
                     (x[c] - l.qp_in.zero_point);
            }
            logits.values.push_back(saturate_int32(static_cast<std::int64_t>(acc)));
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
