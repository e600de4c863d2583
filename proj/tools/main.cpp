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

// intrnn command-line front end.
//
// Exit codes: 0 success, 1 usage, 2 I/O failure, 3 validation failure.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "intrnn/error.hpp"
#include "intrnn/model.hpp"
#include "intrnn/pwl.hpp"
#include "intrnn/serialize.hpp"

namespace {

using namespace intrnn;

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kValidation = 3 };

// --- input files -------------------------------------------------------------

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// One sequence per non-empty line, whitespace-separated token ids.
std::vector<ModelInput> read_tokens(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  std::istringstream text(std::string(bytes.begin(), bytes.end()));
  std::vector<ModelInput> out;
  std::string line;
  for (int line_no = 1; std::getline(text, line); ++line_no) {
    std::istringstream ls(line);
    ModelInput in;
    std::string word;
    while (ls >> word) {
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(word, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != word.size() || v < INT32_MIN || v > INT32_MAX) {
        throw ValidationError(path + ":" + std::to_string(line_no) + ": bad token id '" + word + "'");
      }
      in.tokens.push_back(static_cast<std::int32_t>(v));
    }
    if (!in.tokens.empty()) out.push_back(std::move(in));
  }
  return out;
}

// Little-endian f32 frames of `width` values; the whole file is one sequence.
ModelInput read_features(const std::string& path, std::size_t width) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  if (bytes.size() % (4 * width) != 0) {
    throw ValidationError(path + ": size is not a multiple of " + std::to_string(width) +
                          " f32 values");
  }
  ModelInput in;
  for (std::size_t off = 0; off < bytes.size(); off += 4 * width) {
    std::vector<double> frame(width);
    for (std::size_t u = 0; u < width; ++u) {
      const std::uint8_t* p = &bytes[off + 4 * u];
      const std::uint32_t bits = p[0] | (p[1] << 8) | (p[2] << 16) | (std::uint32_t{p[3]} << 24);
      frame[u] = std::bit_cast<float>(bits);
    }
    in.features.push_back(std::move(frame));
  }
  return in;
}

InputKind resolve_format(const std::string& format, InputKind model_kind) {
  if (format == "auto") return model_kind;
  const InputKind k = format == "tokens" ? InputKind::kTokens : InputKind::kFeatures;
  if (k != model_kind) {
    throw ValidationError("input format '" + format + "' does not match the model input");
  }
  return k;
}

std::vector<ModelInput> read_inputs(const std::vector<std::string>& paths, InputKind kind,
                                    std::size_t width) {
  std::vector<ModelInput> out;
  for (const std::string& p : paths) {
    if (kind == InputKind::kTokens) {
      for (ModelInput& in : read_tokens(p)) out.push_back(std::move(in));
    } else {
      ModelInput in = read_features(p, width);
      if (in.length() > 0) out.push_back(std::move(in));
    }
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Output stream for "--out"; "-" means stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path != "-") {
      file_.open(path, std::ios::trunc);
      if (!file_) throw IoError("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }
  void close(const std::string& path) {
    if (file_.is_open()) {
      file_.close();
      if (!file_) throw IoError("cannot write " + path);
    }
  }

 private:
  std::ofstream file_;
};

// --- subcommands -------------------------------------------------------------

struct InitArgs {
  std::string out;
  std::uint64_t seed = 1;
  std::string input = "tokens";
  std::string layers = "lstm,lstm";
  RandomModelConfig config;
};

void cmd_init(const InitArgs& a) {
  RandomModelConfig c = a.config;
  c.input_kind = a.input == "tokens" ? InputKind::kTokens : InputKind::kFeatures;
  c.layers.clear();
  for (const std::string& name : split(a.layers, ',')) c.layers.push_back(parse_layer_kind(name));
  std::mt19937_64 rng(a.seed);
  save_float_model(random_model(c, rng), a.out);
}

struct DataArgs {
  std::string model;
  std::vector<std::string> data;
  std::string format = "auto";
  std::string out;
};

void cmd_calibrate(const DataArgs& a) {
  const FloatModel m = load_float_model(a.model);
  const InputKind kind = resolve_format(a.format, m.input_kind);
  const std::vector<ModelInput> inputs = read_inputs(a.data, kind, m.input_size);
  save_calibration(calibrate(m, inputs), a.out);
  std::cerr << "calibrated over " << inputs.size() << " sequences\n";
}

struct ConvertArgs {
  std::string model;
  std::string qparams;
  int pieces = 32;
  int cell_bits = 16;
  std::string out;
};

void cmd_convert(const ConvertArgs& a) {
  const FloatModel m = load_float_model(a.model);
  const CalibrationObserver obs = load_calibration(a.qparams);
  ConvertOptions o;
  o.pieces = a.pieces;
  o.cell_bits = a.cell_bits;
  save_model(convert(m, obs, o), a.out);
}

void cmd_run(const DataArgs& a) {
  const IntModel m = load_model(a.model);
  const InputKind kind = resolve_format(a.format, m.input_kind);
  const std::vector<ModelInput> inputs = read_inputs(a.data, kind, m.input_size);
  if (inputs.empty()) throw ValidationError("input sequence is empty");
  Output out(a.out);
  std::ostream& os = out.stream();
  os << "sequence,step";
  for (std::size_t r = 0; r < m.output_size(); ++r) os << ",logit_" << r;
  os << "\n";
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    const Logits l = kind == InputKind::kTokens
                         ? run(m, std::span(inputs[s].tokens))
                         : run(m, quantize_features(m, inputs[s].features));
    for (std::size_t t = 0; t < l.steps; ++t) {
      os << s << "," << t;
      for (std::int32_t v : l.step(t)) os << "," << v;
      os << "\n";
    }
  }
  out.close(a.out);
}

struct BenchArgs {
  std::string model;
  std::size_t seq_len = 128;
  int warmup = 5;
  int iters = 100;
  std::uint64_t seed = 1;
  std::string out;
};

double mean_ms(const std::function<void()>& body, int warmup, int iters) {
  for (int i = 0; i < warmup; ++i) body();
  double total = 0.0;
  for (int i = 0; i < iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    total += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
  return total / iters;
}

void cmd_bench(const BenchArgs& a) {
  const IntModel m = load_model(a.model);
  const FloatModel f = dequantize_model(m);
  std::mt19937_64 rng(a.seed);
  ModelInput in;
  CodeSequence codes;
  if (m.input_kind == InputKind::kTokens) {
    std::uniform_int_distribution<std::int32_t> tok(0, static_cast<std::int32_t>(m.vocab_size) - 1);
    for (std::size_t t = 0; t < a.seq_len; ++t) in.tokens.push_back(tok(rng));
    codes = embed_tokens(m, in.tokens);
  } else {
    std::uniform_real_distribution<double> u(m.qp_input.min, m.qp_input.max);
    in.features.assign(a.seq_len, std::vector<double>(m.input_size));
    for (auto& frame : in.features) {
      for (double& v : frame) v = u(rng);
    }
    codes = quantize_features(m, in.features);
  }

  struct Row {
    std::string config;
    double ms;
  };
  std::vector<Row> rows;
  std::int64_t sink = 0;
  rows.push_back({"float", mean_ms([&] { sink += forward_real(f, in).size(); }, a.warmup, a.iters)});
  rows.push_back({"irnn_pwl", mean_ms([&] { sink += run(m, codes).values[0]; }, a.warmup, a.iters)});
  rows.push_back({"irnn_no_quant_act",
                  mean_ms([&] { sink += run(m, codes, eval_activation_float).values[0]; }, a.warmup,
                          a.iters)});

  std::ostringstream csv;
  csv.precision(10);
  csv << "config,mean_ms,iters_per_sec,speedup\n";
  for (const Row& r : rows) {
    csv << r.config << "," << r.ms << "," << 1000.0 / r.ms << "," << rows[0].ms / r.ms << "\n";
  }
  std::cerr << "bench: seq_len=" << a.seq_len << " warmup=" << a.warmup << " iters=" << a.iters
            << " (checksum " << (sink & 0xff) << ")\n";
  for (const Row& r : rows) {
    std::cerr << "  " << r.config << ": " << r.ms << " ms/seq, speedup x" << rows[0].ms / r.ms
              << "\n";
  }
  std::cout << csv.str();
  if (!a.out.empty()) {
    Output out(a.out);
    out.stream() << csv.str();
    out.close(a.out);
  }
}

struct PwlArgs {
  std::string function;
  std::vector<double> range;
  int bits = 8;
  int out_bits = 8;
  std::vector<int> pieces = {4, 8, 16, 32};
  std::string out;
};

std::string dump_path(const std::string& out, int pieces, bool several) {
  if (!several) return out;
  std::filesystem::path p(out);
  const std::string ext = p.extension().string();
  p.replace_extension();
  return p.string() + "_p" + std::to_string(pieces) + ext;
}

void cmd_pwl(const PwlArgs& a) {
  const Activation act = parse_activation(a.function);
  const ScalarFunction f = [act](double x) { return apply_activation(act, x); };
  const QuantParams in_qp = compute_qparams(a.range[0], a.range[1], a.bits);
  // Every supported function is monotone, so the endpoints bound the output.
  const double y0 = f(in_qp.min);
  const double y1 = f(in_qp.max);
  const QuantParams out_qp = compute_qparams(std::min(y0, y1), std::max(y0, y1), a.out_bits);
  std::cout << "pieces,max_abs_error,max_abs_error_quantized\n";
  for (int n : a.pieces) {
    const PwlTable t = build_pwl(act, in_qp, out_qp, n);
    const PwlErrorStats e = pwl_error(f, t);
    std::cout << n << "," << e.max_abs_error << "," << e.max_abs_error_quantized << "\n";
    if (!a.out.empty()) {
      const std::string path = dump_path(a.out, n, a.pieces.size() > 1);
      Output out(path);
      write_pwl_csv(out.stream(), f, t);
      out.close(path);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Integer-only LSTM inference toolkit"};
  app.require_subcommand(1);
  std::cout.precision(10);

  InitArgs init;
  auto* c_init = app.add_subcommand("init", "Write a random floating-point model");
  c_init->add_option("--out", init.out, "Model manifest to write")->required();
  c_init->add_option("--seed", init.seed, "Random seed");
  c_init->add_option("--input", init.input, "Input kind")->check(CLI::IsMember({"tokens", "features"}));
  c_init->add_option("--layers", init.layers, "Comma-separated layer kinds (projection appended)");
  c_init->add_option("--vocab", init.config.vocab_size, "Vocabulary size")->check(CLI::PositiveNumber);
  c_init->add_option("--input-size", init.config.input_size, "Embedding or feature width")
      ->check(CLI::PositiveNumber);
  c_init->add_option("--hidden", init.config.hidden_size, "LSTM state size")->check(CLI::PositiveNumber);
  c_init->add_option("--attention", init.config.attention_size, "Attention size")
      ->check(CLI::PositiveNumber);
  c_init->add_option("--output", init.config.output_size, "Number of output classes")
      ->check(CLI::PositiveNumber);
  c_init->add_option("--weight-scale", init.config.weight_scale, "Uniform weight range")
      ->check(CLI::PositiveNumber);

  DataArgs cal;
  auto* c_cal = app.add_subcommand("calibrate", "Record per-stage ranges of a float model");
  c_cal->add_option("--model", cal.model, "Float model manifest")->required();
  c_cal->add_option("--data", cal.data, "Token text or f32 feature files")->required();
  c_cal->add_option("--format", cal.format, "Data format")
      ->check(CLI::IsMember({"auto", "tokens", "f32"}));
  c_cal->add_option("--out", cal.out, "Calibration ranges to write")->required();

  ConvertArgs conv;
  auto* c_conv = app.add_subcommand("convert", "Quantize a calibrated float model");
  c_conv->add_option("--model", conv.model, "Float model manifest")->required();
  c_conv->add_option("--qparams", conv.qparams, "Calibration ranges")->required();
  c_conv->add_option("--pieces", conv.pieces, "PWL pieces per activation");
  c_conv->add_option("--cell-bits", conv.cell_bits, "Cell state bitwidth")
      ->check(CLI::IsMember({8, 16}));
  c_conv->add_option("--out", conv.out, "Integer model manifest to write")->required();

  DataArgs runa;
  runa.out = "-";
  auto* c_run = app.add_subcommand("run", "Run an integer model; writes 32-bit logits as CSV");
  c_run->add_option("--model", runa.model, "Integer model manifest")->required();
  c_run->add_option("--input", runa.data, "Token text or f32 feature files")->required();
  c_run->add_option("--format", runa.format, "Input format")
      ->check(CLI::IsMember({"auto", "tokens", "f32"}));
  c_run->add_option("--out", runa.out, "Logits CSV ('-' for stdout)");

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Time float, integer and integer-with-float-activation runs");
  c_bench->add_option("--model", bench.model, "Integer model manifest")->required();
  c_bench->add_option("--seq-len", bench.seq_len, "Sequence length")->check(CLI::PositiveNumber);
  c_bench->add_option("--warmup", bench.warmup, "Untimed runs per configuration")
      ->check(CLI::NonNegativeNumber);
  c_bench->add_option("--iters", bench.iters, "Timed runs per configuration")
      ->check(CLI::PositiveNumber);
  c_bench->add_option("--seed", bench.seed, "Input seed");
  c_bench->add_option("--out", bench.out, "Also write the CSV here");

  PwlArgs pwl;
  auto* c_pwl = app.add_subcommand("pwl", "Build PWL tables and report their error");
  c_pwl->add_option("--function", pwl.function, "Activation")
      ->required()
      ->check(CLI::IsMember({"tanh", "sigmoid", "exp", "identity"}));
  c_pwl->add_option("--range", pwl.range, "Input range a b")->required()->expected(2);
  c_pwl->add_option("--bits", pwl.bits, "Input bitwidth")->check(CLI::IsMember({8, 16}));
  c_pwl->add_option("--out-bits", pwl.out_bits, "Output bitwidth")->check(CLI::IsMember({8, 16}));
  c_pwl->add_option("--pieces", pwl.pieces, "Piece counts")->delimiter(',');
  c_pwl->add_option("--out", pwl.out, "Per-code CSV dump (suffixed _p<N> for several piece counts)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (app.got_subcommand(c_init)) cmd_init(init);
    if (app.got_subcommand(c_cal)) cmd_calibrate(cal);
    if (app.got_subcommand(c_conv)) cmd_convert(conv);
    if (app.got_subcommand(c_run)) cmd_run(runa);
    if (app.got_subcommand(c_bench)) cmd_bench(bench);
    if (app.got_subcommand(c_pwl)) cmd_pwl(pwl);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kOk;
}
