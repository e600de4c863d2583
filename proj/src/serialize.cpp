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

#include "intrnn/serialize.hpp"

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>

#include "intrnn/error.hpp"
#include "json.hpp"

namespace intrnn {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr std::string_view kIntFormat = "intrnn-int-model";
constexpr std::string_view kFloatFormat = "intrnn-float-model";
constexpr std::string_view kCalibrationFormat = "intrnn-calibration";

template <class T>
struct Dtype;
template <>
struct Dtype<std::uint8_t> {
  static constexpr std::string_view name = "u8";
};
template <>
struct Dtype<std::int32_t> {
  static constexpr std::string_view name = "i32";
};
template <>
struct Dtype<std::int64_t> {
  static constexpr std::string_view name = "i64";
};
template <>
struct Dtype<double> {
  static constexpr std::string_view name = "f64";
};

template <class T>
std::uint64_t to_bits(T v) {
  if constexpr (std::is_same_v<T, double>) {
    return std::bit_cast<std::uint64_t>(v);
  } else {
    return static_cast<std::make_unsigned_t<T>>(v);
  }
}

template <class T>
T from_bits(std::uint64_t b) {
  if constexpr (std::is_same_v<T, double>) {
    return std::bit_cast<double>(b);
  } else {
    return static_cast<T>(static_cast<std::make_unsigned_t<T>>(b));
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
  return buf;
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("cannot read " + path.string());
  return bytes;
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw IoError("cannot write " + path.string());
}

json read_json(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = read_bytes(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  const std::string text = j.dump(1) + "\n";
  write_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

void check_header(const json& j, std::string_view format, const fs::path& path) {
  if (!j.is_object() || j.value("format", "") != format) {
    throw ValidationError(path.string() + " is not a " + std::string(format) + " file");
  }
  if (!j.contains("version") || j["version"] != kFormatVersion) {
    throw ValidationError("unsupported format version in " + path.string() + " (expected " +
                          std::to_string(kFormatVersion) + ")");
  }
}

// Accumulates the blob and the "tensors"/"qparams" maps of a manifest.
class Writer {
 public:
  template <class T>
  std::string tensor(const std::string& name, std::span<const T> data,
                     std::vector<std::size_t> shape) {
    while (bytes_.size() % 8 != 0) bytes_.push_back(0);
    const std::size_t offset = bytes_.size();
    for (T v : data) {
      const std::uint64_t b = to_bits(v);
      for (std::size_t k = 0; k < sizeof(T); ++k) bytes_.push_back(static_cast<std::uint8_t>(b >> (8 * k)));
    }
    unique(tensors_, name);
    tensors_[name] = {{"dtype", Dtype<T>::name},
                      {"shape", shape},
                      {"offset", offset},
                      {"length", data.size() * sizeof(T)}};
    return name;
  }

  template <class T>
  std::string tensor(const std::string& name, const std::vector<T>& data) {
    return tensor<T>(name, std::span<const T>(data), {data.size()});
  }

  std::string qparams(const std::string& name, const QuantParams& qp) {
    unique(qparams_, name);
    qparams_[name] = {{"min", qp.min},
                      {"max", qp.max},
                      {"bitwidth", qp.bitwidth},
                      {"scale", qp.scale},
                      {"zero_point", qp.zero_point}};
    return name;
  }

  void finish(json& manifest, std::string_view format, const fs::path& path) {
    const fs::path blob = blob_path(path);
    manifest["format"] = format;
    manifest["version"] = kFormatVersion;
    manifest["endianness"] = "little";
    manifest["blob"] = {{"file", blob.filename().string()},
                        {"size", bytes_.size()},
                        {"checksum", hex64(fnv1a64(bytes_))}};
    manifest["tensors"] = tensors_;
    if (!qparams_.empty()) manifest["qparams"] = qparams_;
    write_bytes(blob, bytes_);
    write_json(path, manifest);
  }

 private:
  static void unique(const json& map, const std::string& name) {
    if (map.contains(name)) throw std::logic_error("duplicate manifest entry " + name);
  }

  std::vector<std::uint8_t> bytes_;
  json tensors_ = json::object();
  json qparams_ = json::object();
};

// Resolves tensor and qparams references against a verified blob.
class Reader {
 public:
  Reader(const fs::path& path, std::string_view format) : root_(read_json(path)) {
    check_header(root_, format, path);
    if (root_.value("endianness", "") != "little") {
      throw ValidationError("unsupported endianness in " + path.string());
    }
    const json& blob = root_.at("blob");
    const fs::path file = path.parent_path() / blob.at("file").get<std::string>();
    bytes_ = read_bytes(file);
    const std::size_t size = blob.at("size").get<std::size_t>();
    if (bytes_.size() < size) {
      throw IoError("truncated blob " + file.string() + ": " + std::to_string(bytes_.size()) +
                    " of " + std::to_string(size) + " bytes");
    }
    if (bytes_.size() != size) throw IoError("blob size mismatch in " + file.string());
    if (hex64(fnv1a64(bytes_)) != blob.at("checksum").get<std::string>()) {
      throw IoError("checksum mismatch in " + file.string());
    }
  }

  const json& root() const { return root_; }

  template <class T>
  std::vector<T> tensor(const json& ref) const {
    const std::string name = ref.get<std::string>();
    const json& tensors = root_.at("tensors");
    if (!tensors.contains(name)) throw ValidationError("unresolved tensor reference " + name);
    const json& t = tensors[name];
    if (t.at("dtype").get<std::string>() != Dtype<T>::name) {
      throw ValidationError("tensor " + name + " has dtype " + t.at("dtype").get<std::string>() +
                            ", expected " + std::string(Dtype<T>::name));
    }
    std::size_t count = 1;
    for (const json& d : t.at("shape")) count *= d.get<std::size_t>();
    const std::size_t offset = t.at("offset").get<std::size_t>();
    const std::size_t length = t.at("length").get<std::size_t>();
    if (length != count * sizeof(T)) throw ValidationError("tensor " + name + " length does not match its shape");
    if (offset > bytes_.size() || length > bytes_.size() - offset) {
      throw IoError("tensor " + name + " lies outside the blob");
    }
    std::vector<T> out(count);
    const std::uint8_t* p = bytes_.data() + offset;
    for (std::size_t i = 0; i < count; ++i, p += sizeof(T)) {
      std::uint64_t b = 0;
      for (std::size_t k = 0; k < sizeof(T); ++k) b |= static_cast<std::uint64_t>(p[k]) << (8 * k);
      out[i] = from_bits<T>(b);
    }
    return out;
  }

  QuantParams qparams(const json& ref) const {
    const std::string name = ref.get<std::string>();
    if (!root_.contains("qparams") || !root_["qparams"].contains(name)) {
      throw ValidationError("unresolved qparams reference " + name);
    }
    const json& q = root_["qparams"][name];
    QuantParams stored;
    stored.min = q.at("min").get<double>();
    stored.max = q.at("max").get<double>();
    stored.bitwidth = q.at("bitwidth").get<int>();
    stored.scale = q.at("scale").get<double>();
    stored.zero_point = q.at("zero_point").get<std::int32_t>();
    if (!(compute_qparams(stored.min, stored.max, stored.bitwidth) == stored)) {
      throw ValidationError("qparams " + name + " are inconsistent with their range");
    }
    return stored;
  }

 private:
  json root_;
  std::vector<std::uint8_t> bytes_;
};

// Wraps structural JSON errors (missing keys, wrong types) as IoError.
template <class F>
auto guarded(const fs::path& path, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
}

std::string_view input_kind_name(InputKind k) { return k == InputKind::kTokens ? "tokens" : "features"; }

InputKind parse_input_kind(const std::string& s) {
  if (s == "tokens") return InputKind::kTokens;
  if (s == "features") return InputKind::kFeatures;
  throw ValidationError("unknown input kind: " + s);
}

// --- integer model -----------------------------------------------------------

json save_matrix(Writer& w, const std::string& name, const QuantMatrix& m) {
  std::vector<std::uint8_t> codes;
  codes.reserve(m.centered.size());
  for (Code c : m.codes()) codes.push_back(static_cast<std::uint8_t>(c));
  return {{"rows", m.rows},
          {"cols", m.cols},
          {"qparams", w.qparams(name + ".qp", m.qp)},
          {"codes", w.tensor<std::uint8_t>(name, codes, {m.rows, m.cols})}};
}

QuantMatrix load_matrix(const Reader& r, const json& j) {
  const std::vector<std::uint8_t> raw = r.tensor<std::uint8_t>(j.at("codes"));
  const std::vector<Code> codes(raw.begin(), raw.end());
  return QuantMatrix::from_codes(codes, j.at("rows").get<std::size_t>(),
                                 j.at("cols").get<std::size_t>(), r.qparams(j.at("qparams")));
}

json save_pwl(Writer& w, const std::string& name, const PwlTable& t) {
  json j = {{"in", w.qparams(name + ".in", t.in_qp)},
            {"out", w.qparams(name + ".out", t.out_qp)},
            {"knots_q", w.tensor(name + ".knots_q", t.knots_q)},
            {"knots_r", w.tensor(name + ".knots_r", t.knots_r)},
            {"slopes", w.tensor(name + ".slopes", t.slopes)},
            {"values", w.tensor(name + ".values", t.values)},
            {"slope_fx", w.tensor(name + ".slope_fx", t.slope_fx)},
            {"intercept_fx", w.tensor(name + ".intercept_fx", t.intercept_fx)}};
  j["activation"] = t.activation ? json(activation_name(*t.activation)) : json(nullptr);
  return j;
}

PwlTable load_pwl(const Reader& r, const json& j) {
  PwlTable t;
  t.in_qp = r.qparams(j.at("in"));
  t.out_qp = r.qparams(j.at("out"));
  t.knots_q = r.tensor<std::int32_t>(j.at("knots_q"));
  t.knots_r = r.tensor<double>(j.at("knots_r"));
  t.slopes = r.tensor<double>(j.at("slopes"));
  t.values = r.tensor<double>(j.at("values"));
  t.slope_fx = r.tensor<std::int64_t>(j.at("slope_fx"));
  t.intercept_fx = r.tensor<std::int64_t>(j.at("intercept_fx"));
  if (!j.at("activation").is_null()) t.activation = parse_activation(j["activation"].get<std::string>());
  t.validate();
  return t;
}

json save_madnorm(Writer& w, const std::string& name, const MadNormQParams& p) {
  json j = {{"hidden", p.hidden},
            {"x", w.qparams(name + ".x", p.qp_x)},
            {"mu", w.qparams(name + ".mu", p.qp_mu)},
            {"xhat", w.qparams(name + ".xhat", p.qp_xhat)},
            {"d", w.qparams(name + ".d", p.qp_d)},
            {"y", w.qparams(name + ".y", p.qp_y)}};
  if (p.affine) {
    const MadNormAffine& a = *p.affine;
    j["affine"] = {{"gamma", w.tensor(name + ".gamma", a.gamma_q)},
                   {"beta", w.tensor(name + ".beta", a.beta_q)},
                   {"qp_gamma", w.qparams(name + ".gamma", a.qp_gamma)},
                   {"qp_beta", w.qparams(name + ".beta", a.qp_beta)},
                   {"qp_out", w.qparams(name + ".out", a.qp_out)}};
  }
  return j;
}

MadNormQParams load_madnorm(const Reader& r, const json& j) {
  MadNormQParams p;
  p.hidden = j.at("hidden").get<std::size_t>();
  p.qp_x = r.qparams(j.at("x"));
  p.qp_mu = r.qparams(j.at("mu"));
  p.qp_xhat = r.qparams(j.at("xhat"));
  p.qp_d = r.qparams(j.at("d"));
  p.qp_y = r.qparams(j.at("y"));
  if (j.contains("affine")) {
    const json& a = j["affine"];
    p.affine = MadNormAffine{r.tensor<std::int32_t>(a.at("gamma")), r.tensor<std::int32_t>(a.at("beta")),
                             r.qparams(a.at("qp_gamma")), r.qparams(a.at("qp_beta")),
                             r.qparams(a.at("qp_out"))};
  }
  p.validate();
  return p;
}

json save_cell(Writer& w, const std::string& name, const QuantLstmSpec& s) {
  json j = {{"input_size", s.input_size},
            {"hidden_size", s.hidden_size},
            {"context_size", s.context_size},
            {"madnorm", s.madnorm},
            {"cell_bits", s.cell_bits},
            {"x", w.qparams(name + ".x", s.qp_x)},
            {"h", w.qparams(name + ".h", s.qp_h)},
            {"mx", w.qparams(name + ".mx", s.qp_mx)},
            {"mh", w.qparams(name + ".mh", s.qp_mh)},
            {"fc", w.qparams(name + ".fc", s.qp_fc)},
            {"ij", w.qparams(name + ".ij", s.qp_ij)},
            {"c", w.qparams(name + ".c", s.qp_c)},
            {"w_x", save_matrix(w, name + ".w_x", s.w_x)},
            {"w_h", save_matrix(w, name + ".w_h", s.w_h)},
            {"bias", w.tensor(name + ".bias", s.bias)},
            {"cell_table", save_pwl(w, name + ".cell_table", s.cell_table)}};
  static constexpr const char* kGate[4] = {"i", "f", "j", "o"};
  for (int g = 0; g < 4; ++g) {
    j["gates"].push_back(w.qparams(name + ".gate." + kGate[g], s.qp_gate[g]));
    j["gate_tables"].push_back(save_pwl(w, name + ".gate_table." + kGate[g], s.gate_tables[g]));
  }
  if (s.context_size > 0) {
    j["s"] = w.qparams(name + ".s", s.qp_s);
    j["ms"] = w.qparams(name + ".ms", s.qp_ms);
    j["w_s"] = save_matrix(w, name + ".w_s", s.w_s);
  }
  if (s.norm_x) j["norm_x"] = save_madnorm(w, name + ".norm_x", *s.norm_x);
  if (s.norm_h) j["norm_h"] = save_madnorm(w, name + ".norm_h", *s.norm_h);
  if (s.norm_c) j["norm_c"] = save_madnorm(w, name + ".norm_c", *s.norm_c);
  return j;
}

LstmKernel load_cell(const Reader& r, const json& j) {
  QuantLstmSpec s;
  s.input_size = j.at("input_size").get<std::size_t>();
  s.hidden_size = j.at("hidden_size").get<std::size_t>();
  s.context_size = j.at("context_size").get<std::size_t>();
  s.madnorm = j.at("madnorm").get<bool>();
  s.cell_bits = j.at("cell_bits").get<int>();
  s.qp_x = r.qparams(j.at("x"));
  s.qp_h = r.qparams(j.at("h"));
  s.qp_mx = r.qparams(j.at("mx"));
  s.qp_mh = r.qparams(j.at("mh"));
  s.qp_fc = r.qparams(j.at("fc"));
  s.qp_ij = r.qparams(j.at("ij"));
  s.qp_c = r.qparams(j.at("c"));
  s.w_x = load_matrix(r, j.at("w_x"));
  s.w_h = load_matrix(r, j.at("w_h"));
  s.bias = r.tensor<std::int32_t>(j.at("bias"));
  s.cell_table = load_pwl(r, j.at("cell_table"));
  const json& gates = j.at("gates");
  const json& tables = j.at("gate_tables");
  if (gates.size() != 4 || tables.size() != 4) throw ValidationError("a cell needs four gate blocks");
  for (std::size_t g = 0; g < 4; ++g) {
    s.qp_gate[g] = r.qparams(gates[g]);
    s.gate_tables[g] = load_pwl(r, tables[g]);
  }
  if (s.context_size > 0) {
    s.qp_s = r.qparams(j.at("s"));
    s.qp_ms = r.qparams(j.at("ms"));
    s.w_s = load_matrix(r, j.at("w_s"));
  }
  if (j.contains("norm_x")) s.norm_x = load_madnorm(r, j["norm_x"]);
  if (j.contains("norm_h")) s.norm_h = load_madnorm(r, j["norm_h"]);
  if (j.contains("norm_c")) s.norm_c = load_madnorm(r, j["norm_c"]);
  return LstmKernel::create(std::move(s));
}

json save_attention(Writer& w, const std::string& name, const QuantAttentionSpec& a) {
  return {{"attention_size", a.attention_size},
          {"query_size", a.query_size},
          {"key_size", a.key_size},
          {"h", w.qparams(name + ".h", a.qp_h)},
          {"enc", w.qparams(name + ".enc", a.qp_enc)},
          {"q", w.qparams(name + ".q", a.qp_q)},
          {"k", w.qparams(name + ".k", a.qp_k)},
          {"pre", w.qparams(name + ".pre", a.qp_pre)},
          {"e", w.qparams(name + ".e", a.qp_e)},
          {"shift", w.qparams(name + ".shift", a.qp_shift)},
          {"s", w.qparams(name + ".s", a.qp_s)},
          {"w_q", save_matrix(w, name + ".w_q", a.w_q)},
          {"w_k", save_matrix(w, name + ".w_k", a.w_k)},
          {"v", save_matrix(w, name + ".v", a.v)},
          {"tanh_table", save_pwl(w, name + ".tanh_table", a.tanh_table)},
          {"exp_table", save_pwl(w, name + ".exp_table", a.exp_table)}};
}

AttentionKernel load_attention(const Reader& r, const json& j) {
  QuantAttentionSpec a;
  a.attention_size = j.at("attention_size").get<std::size_t>();
  a.query_size = j.at("query_size").get<std::size_t>();
  a.key_size = j.at("key_size").get<std::size_t>();
  a.qp_h = r.qparams(j.at("h"));
  a.qp_enc = r.qparams(j.at("enc"));
  a.qp_q = r.qparams(j.at("q"));
  a.qp_k = r.qparams(j.at("k"));
  a.qp_pre = r.qparams(j.at("pre"));
  a.qp_e = r.qparams(j.at("e"));
  a.qp_shift = r.qparams(j.at("shift"));
  a.qp_s = r.qparams(j.at("s"));
  a.w_q = load_matrix(r, j.at("w_q"));
  a.w_k = load_matrix(r, j.at("w_k"));
  a.v = load_matrix(r, j.at("v"));
  a.tanh_table = load_pwl(r, j.at("tanh_table"));
  a.exp_table = load_pwl(r, j.at("exp_table"));
  return AttentionKernel::create(std::move(a));
}

// --- float model -------------------------------------------------------------

json save_float_cell(Writer& w, const std::string& name, const LstmWeights& c) {
  json j = {{"input_size", c.input_size},
            {"hidden_size", c.hidden_size},
            {"context_size", c.context_size},
            {"madnorm", c.madnorm},
            {"w_x", w.tensor<double>(name + ".w_x", c.w_x, {4 * c.hidden_size, c.input_size})},
            {"w_h", w.tensor<double>(name + ".w_h", c.w_h, {4 * c.hidden_size, c.hidden_size})},
            {"bias", w.tensor(name + ".bias", c.bias)}};
  if (c.context_size > 0) {
    j["w_s"] = w.tensor<double>(name + ".w_s", c.w_s, {4 * c.hidden_size, c.context_size});
  }
  return j;
}

LstmWeights load_float_cell(const Reader& r, const json& j) {
  LstmWeights c;
  c.input_size = j.at("input_size").get<std::size_t>();
  c.hidden_size = j.at("hidden_size").get<std::size_t>();
  c.context_size = j.at("context_size").get<std::size_t>();
  c.madnorm = j.at("madnorm").get<bool>();
  c.w_x = r.tensor<double>(j.at("w_x"));
  c.w_h = r.tensor<double>(j.at("w_h"));
  c.bias = r.tensor<double>(j.at("bias"));
  if (c.context_size > 0) c.w_s = r.tensor<double>(j.at("w_s"));
  c.validate();
  return c;
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

fs::path blob_path(const fs::path& manifest) {
  fs::path p = manifest;
  return p.replace_extension(".bin");
}

void save_model(const IntModel& model, const fs::path& path) {
  model.validate();
  Writer w;
  json m;
  m["options"] = {{"pieces", model.options.pieces},
                  {"cell_bits", model.options.cell_bits},
                  {"gate_bits", model.options.gate_bits}};
  m["input"] = {{"kind", input_kind_name(model.input_kind)},
                {"vocab_size", model.vocab_size},
                {"size", model.input_size},
                {"qparams", w.qparams("input", model.qp_input)}};
  if (model.input_kind == InputKind::kTokens) m["input"]["embedding"] = save_matrix(w, "embedding", model.embedding);
  m["layers"] = json::array();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const IntLayer& l = model.layers[i];
    const std::string p = "layer" + std::to_string(i);
    json j = {{"kind", layer_kind_name(l.kind)},
              {"input_width", l.input_width},
              {"output_width", l.output_width},
              {"qp_in", w.qparams(p + ".in", l.qp_in)}};
    if (l.kind != LayerKind::kProjection) j["qp_out"] = w.qparams(p + ".out", l.qp_out);
    if (l.cell) j["cell"] = save_cell(w, p + (l.backward ? ".fwd" : ".cell"), l.cell->spec);
    if (l.backward) j["backward"] = save_cell(w, p + ".bwd", l.backward->spec);
    if (l.attention) j["attention"] = save_attention(w, p + ".attn", l.attention->spec);
    if (l.kind == LayerKind::kResidualAdd) {
      j["source"] = l.source;
      j["qp_source"] = w.qparams(p + ".source", l.qp_source);
    }
    if (l.kind == LayerKind::kProjection) {
      j["weight"] = save_matrix(w, p + ".weight", l.weight);
      j["bias"] = w.tensor(p + ".bias", l.bias);
    }
    m["layers"].push_back(std::move(j));
  }
  w.finish(m, kIntFormat, path);
}

IntModel load_model(const fs::path& path) {
  return guarded(path, [&] {
    const Reader r(path, kIntFormat);
    const json& m = r.root();
    IntModel im;
    const json& opt = m.at("options");
    im.options = {opt.at("pieces").get<int>(), opt.at("cell_bits").get<int>(),
                  opt.at("gate_bits").get<int>()};
    const json& in = m.at("input");
    im.input_kind = parse_input_kind(in.at("kind").get<std::string>());
    im.vocab_size = in.at("vocab_size").get<std::size_t>();
    im.input_size = in.at("size").get<std::size_t>();
    im.qp_input = r.qparams(in.at("qparams"));
    if (im.input_kind == InputKind::kTokens) im.embedding = load_matrix(r, in.at("embedding"));
    for (const json& j : m.at("layers")) {
      IntLayer l;
      l.kind = parse_layer_kind(j.at("kind").get<std::string>());
      l.input_width = j.at("input_width").get<std::size_t>();
      l.output_width = j.at("output_width").get<std::size_t>();
      l.qp_in = r.qparams(j.at("qp_in"));
      if (l.kind != LayerKind::kProjection) l.qp_out = r.qparams(j.at("qp_out"));
      if (j.contains("cell")) l.cell = load_cell(r, j["cell"]);
      if (j.contains("backward")) l.backward = load_cell(r, j["backward"]);
      if (j.contains("attention")) l.attention = load_attention(r, j["attention"]);
      if (l.kind == LayerKind::kResidualAdd) {
        l.source = j.at("source").get<std::size_t>();
        l.qp_source = r.qparams(j.at("qp_source"));
        l.residual = residual_requantizer(l.qp_in, l.qp_source, l.qp_out);
      }
      if (l.kind == LayerKind::kProjection) {
        l.weight = load_matrix(r, j.at("weight"));
        l.bias = r.tensor<std::int32_t>(j.at("bias"));
      }
      im.layers.push_back(std::move(l));
    }
    im.validate();
    return im;
  });
}

void save_float_model(const FloatModel& model, const fs::path& path) {
  model.validate();
  Writer w;
  json m;
  m["input"] = {{"kind", input_kind_name(model.input_kind)},
                {"vocab_size", model.vocab_size},
                {"size", model.input_size}};
  if (model.input_kind == InputKind::kTokens) {
    m["input"]["embedding"] =
        w.tensor<double>("embedding", model.embedding, {model.vocab_size, model.input_size});
  }
  m["layers"] = json::array();
  const std::vector<std::size_t> widths = model.stream_widths();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const FloatLayer& l = model.layers[i];
    const std::string p = "layer" + std::to_string(i);
    json j = {{"kind", layer_kind_name(l.kind)}};
    switch (l.kind) {
      case LayerKind::kBiLstm:
        j["backward"] = save_float_cell(w, p + ".bwd", l.backward);
        [[fallthrough]];
      case LayerKind::kLstm:
      case LayerKind::kMadNormLstm:
        j["cell"] = save_float_cell(w, p + (l.kind == LayerKind::kBiLstm ? ".fwd" : ".cell"), l.cell);
        break;
      case LayerKind::kAttentionDecoder: {
        const AttentionWeights& a = l.attention;
        j["cell"] = save_float_cell(w, p + ".cell", l.cell);
        j["attention"] = {
            {"attention_size", a.attention_size},
            {"query_size", a.query_size},
            {"key_size", a.key_size},
            {"w_q", w.tensor<double>(p + ".attn.w_q", a.w_q, {a.attention_size, a.query_size})},
            {"w_k", w.tensor<double>(p + ".attn.w_k", a.w_k, {a.attention_size, a.key_size})},
            {"v", w.tensor(p + ".attn.v", a.v)}};
        break;
      }
      case LayerKind::kResidualAdd:
        j["source"] = l.source;
        break;
      case LayerKind::kProjection:
        j["output_size"] = l.output_size;
        j["weight"] = w.tensor<double>(p + ".weight", l.weight, {l.output_size, widths[i]});
        j["bias"] = w.tensor(p + ".bias", l.bias);
        break;
    }
    m["layers"].push_back(std::move(j));
  }
  w.finish(m, kFloatFormat, path);
}

FloatModel load_float_model(const fs::path& path) {
  return guarded(path, [&] {
    const Reader r(path, kFloatFormat);
    const json& m = r.root();
    FloatModel fm;
    const json& in = m.at("input");
    fm.input_kind = parse_input_kind(in.at("kind").get<std::string>());
    fm.vocab_size = in.at("vocab_size").get<std::size_t>();
    fm.input_size = in.at("size").get<std::size_t>();
    if (fm.input_kind == InputKind::kTokens) fm.embedding = r.tensor<double>(in.at("embedding"));
    for (const json& j : m.at("layers")) {
      FloatLayer l;
      l.kind = parse_layer_kind(j.at("kind").get<std::string>());
      if (j.contains("cell")) l.cell = load_float_cell(r, j["cell"]);
      if (j.contains("backward")) l.backward = load_float_cell(r, j["backward"]);
      if (j.contains("attention")) {
        const json& a = j["attention"];
        l.attention.attention_size = a.at("attention_size").get<std::size_t>();
        l.attention.query_size = a.at("query_size").get<std::size_t>();
        l.attention.key_size = a.at("key_size").get<std::size_t>();
        l.attention.w_q = r.tensor<double>(a.at("w_q"));
        l.attention.w_k = r.tensor<double>(a.at("w_k"));
        l.attention.v = r.tensor<double>(a.at("v"));
      }
      if (j.contains("source")) l.source = j["source"].get<std::size_t>();
      if (l.kind == LayerKind::kProjection) {
        l.output_size = j.at("output_size").get<std::size_t>();
        l.weight = r.tensor<double>(j.at("weight"));
        l.bias = r.tensor<double>(j.at("bias"));
      }
      fm.layers.push_back(std::move(l));
    }
    fm.validate();
    return fm;
  });
}

void save_calibration(const CalibrationObserver& observer, const fs::path& path) {
  json stages = json::object();
  for (const auto& [name, range] : observer.stages()) {
    if (!range.observed()) continue;
    stages[name] = {{"min", range.min}, {"max", range.max}, {"count", range.count}};
  }
  write_json(path, {{"format", kCalibrationFormat}, {"version", kFormatVersion}, {"stages", stages}});
}

CalibrationObserver load_calibration(const fs::path& path) {
  return guarded(path, [&] {
    const json j = read_json(path);
    check_header(j, kCalibrationFormat, path);
    CalibrationObserver observer;
    for (const auto& [name, s] : j.at("stages").items()) {
      RangeObserver range;
      range.min = s.at("min").get<double>();
      range.max = s.at("max").get<double>();
      range.count = s.at("count").get<std::uint64_t>();
      if (range.count == 0 || !(range.min <= range.max)) {
        throw ValidationError("invalid range for calibration stage " + name);
      }
      observer.set(name, range);
    }
    return observer;
  });
}

}  // namespace intrnn
