// Copyright 2026 The hpi Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "hpi/error.hpp"
#include "hpi/nonpoly/secure_eval.hpp"
#include "hpi/numeric.hpp"
#include "hpi/rng.hpp"

// Encoder-only transformer over the 64-bit ring:
//   X1 = onehot * (W_E * delta) + lambda
//   attn(U) = concat_h(softmax((U W_Q)_h (U W_K)_h^T / sqrt(n)) (U W_V)_h) W_O
//   ffn(U) = act(U W_1) W_2
//   post-norm block: Z = LN(X + attn(X)), X' = LN(Z + ffn(Z))
//   pre-norm block:  Z = X + attn(LN(X)), X' = Z + ffn(LN(Z))
//   logits = X W_out (post-norm) or LN(X) W_out (pre-norm)
// Scales: weights and activations carry f fractional bits; products are left
// unscaled until the next non-linear step, which rescales inside its circuit.

namespace hpi::model {

enum class Activation : std::uint8_t { kRelu, kGelu };

inline const char* activation_name(Activation a) { return a == Activation::kRelu ? "relu" : "gelu"; }

enum class Norm : std::uint8_t { kPost, kPre };

inline const char* norm_name(Norm n) { return n == Norm::kPost ? "post" : "pre"; }

inline Norm parse_norm(const std::string& s) {
  if (s == "post") return Norm::kPost;
  if (s == "pre") return Norm::kPre;
  ::hpi::detail::throw_error(ErrorCode::kConfig, "unknown norm placement '", s, "' (post|pre)");
}

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "gelu") return Activation::kGelu;
  ::hpi::detail::throw_error(ErrorCode::kConfig, "unknown activation '", s, "' (relu|gelu)");
}

struct ModelConfig {
  std::size_t N = 1;       // blocks
  std::size_t d_emb = 16;  // embedding width
  std::size_t H = 2;       // heads
  std::size_t n = 8;       // tokens
  std::size_t d_oh = 64;   // vocabulary
  std::size_t d_ff = 32;   // hidden width of the feed-forward layer
  std::size_t d_out = 2;   // output classes per token
  Activation activation = Activation::kRelu;
  Norm norm = Norm::kPost;
  double delta = 1.0;      // positional coefficient
  RingParams ring{};

  std::size_t d_head() const { return d_emb / H; }

  void validate() const {
    HPI_ENFORCE(N >= 1 && d_emb >= 1 && H >= 1 && n >= 1 && d_oh >= 1 && d_ff >= 1 && d_out >= 1,
                kConfig, "model dimensions must be positive");
    HPI_ENFORCE(d_emb % H == 0, kConfig, "d_emb ", d_emb, " is not divisible by H ", H);
    HPI_ENFORCE(ring.modulus_bits == 64, kUnsupported, "the model runs over the 64-bit ring only");
    ring.validate();
    const double bound = std::ldexp(1.0, ring.value_bits - 1 - ring.frac_bits);
    HPI_ENFORCE(std::isfinite(delta) && std::fabs(delta) < bound, kConfig, "delta ", delta,
                " is not representable");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"N", c.N},         {"d_emb", c.d_emb}, {"H", c.H},
          {"n", c.n},         {"d_oh", c.d_oh},   {"d_ff", c.d_ff},
          {"d_out", c.d_out}, {"activation", activation_name(c.activation)},
          {"norm", norm_name(c.norm)}, {"delta", c.delta}, {"value_bits", c.ring.value_bits},
          {"frac_bits", c.ring.frac_bits}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.N = j.at("N").get<std::size_t>();
    c.d_emb = j.at("d_emb").get<std::size_t>();
    c.H = j.at("H").get<std::size_t>();
    c.n = j.at("n").get<std::size_t>();
    c.d_oh = j.at("d_oh").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.d_out = j.at("d_out").get<std::size_t>();
    c.activation = parse_activation(j.at("activation").get<std::string>());
    c.norm = parse_norm(j.value("norm", std::string("post")));
    c.delta = j.at("delta").get<double>();
    c.ring.value_bits = j.at("value_bits").get<int>();
    c.ring.frac_bits = j.at("frac_bits").get<int>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    ::hpi::detail::throw_error(ErrorCode::kSchema, "model config: ", e.what());
  }
}

struct BlockWeights {
  FixedTensor W_Q, W_K, W_V, W_O;  // d_emb x d_emb
  FixedTensor W_1;                 // d_emb x d_ff
  FixedTensor W_2;                 // d_ff x d_emb

  friend bool operator==(const BlockWeights&, const BlockWeights&) = default;
};

struct ModelWeights {
  FixedTensor W_E;     // d_oh x d_emb
  FixedTensor lambda;  // n x d_emb
  std::vector<BlockWeights> blocks;
  FixedTensor W_out;   // d_emb x d_out

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

/// Visits every tensor with its file name and expected shape.
template <class W, class F>
void for_each_tensor(const ModelConfig& c, W& w, F&& f) {
  const std::size_t d = c.d_emb;
  f("W_E", w.W_E, c.d_oh, d);
  f("lambda", w.lambda, c.n, d);
  for (std::size_t b = 0; b < w.blocks.size(); ++b) {
    auto& blk = w.blocks[b];
    const std::string p = "block" + std::to_string(b) + ".";
    f(p + "W_Q", blk.W_Q, d, d);
    f(p + "W_K", blk.W_K, d, d);
    f(p + "W_V", blk.W_V, d, d);
    f(p + "W_O", blk.W_O, d, d);
    f(p + "W_1", blk.W_1, d, c.d_ff);
    f(p + "W_2", blk.W_2, c.d_ff, d);
  }
  f("W_out", w.W_out, d, c.d_out);
}

inline void check_weights(const ModelConfig& c, const ModelWeights& w) {
  HPI_ENFORCE(w.blocks.size() == c.N, kShapeMismatch, "weights have ", w.blocks.size(),
              " blocks, config says ", c.N);
  for_each_tensor(c, w, [&](const std::string& name, const FixedTensor& t, std::size_t r, std::size_t k) {
    HPI_ENFORCE(t.rows == r && t.cols == k, kShapeMismatch, name, " is ", t.rows, "x", t.cols,
                ", expected ", r, "x", k);
    for (Word v : t.data) {
      const auto s = c.ring.to_signed(v);
      HPI_ENFORCE(s >= c.ring.value_min() && s <= c.ring.value_max(), kOverflow, name,
                  " holds a value outside ", c.ring.value_bits, " bits");
    }
  });
}

/// Uniform weights in [-scale/sqrt(fan_in), scale/sqrt(fan_in)); lambda in
/// [-0.25, 0.25), W_E in [-1, 1).
inline ModelWeights random_weights(const ModelConfig& c, CounterRng& rng, double scale = 1.0) {
  c.validate();
  ModelWeights w;
  w.blocks.resize(c.N);
  for_each_tensor(c, w, [&](const std::string& name, FixedTensor& t, std::size_t r, std::size_t k) {
    double a = scale / std::sqrt(static_cast<double>(r));
    if (name == "W_E") a = 1.0;
    if (name == "lambda") a = 0.25;
    t = random_fixed(r, k, rng, -a, a, c.ring);
  });
  return w;
}

// ---------------------------------------------------------------------------
// Weight files: "HPIW", u32 version, u64 header length, JSON header, then the
// tensors' words as little-endian u64 in header order.

inline constexpr char kWeightMagic[4] = {'H', 'P', 'I', 'W'};
inline constexpr std::uint32_t kWeightVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(static_cast<std::uint64_t>(v) >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& is, const char* what) {
  unsigned char b[sizeof(T)];
  is.read(reinterpret_cast<char*>(b), sizeof(T));
  HPI_ENFORCE(is.gcount() == static_cast<std::streamsize>(sizeof(T)), kSchema, "weight file truncated in ", what);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace detail

inline void save_weights(std::ostream& os, const ModelConfig& c, const ModelWeights& w) {
  check_weights(c, w);
  nlohmann::json header{{"version", kWeightVersion}, {"frac_bits", c.ring.frac_bits},
                        {"config", config_to_json(c)}, {"tensors", nlohmann::json::array()}};
  for_each_tensor(c, w, [&](const std::string& name, const FixedTensor& t, std::size_t, std::size_t) {
    header["tensors"].push_back({{"name", name}, {"rows", t.rows}, {"cols", t.cols}});
  });
  const std::string text = header.dump();
  os.write(kWeightMagic, 4);
  detail::put_le<std::uint32_t>(os, kWeightVersion);
  detail::put_le<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for_each_tensor(c, w, [&](const std::string&, const FixedTensor& t, std::size_t, std::size_t) {
    for (Word v : t.data) detail::put_le<std::uint64_t>(os, v);
  });
  HPI_ENFORCE(os.good(), kInternal, "write failed");
}

inline std::pair<ModelConfig, ModelWeights> load_weights(std::istream& is) {
  char magic[4] = {};
  is.read(magic, 4);
  HPI_ENFORCE(is.gcount() == 4 && std::memcmp(magic, kWeightMagic, 4) == 0, kSchema, "not a weight file");
  const auto version = detail::get_le<std::uint32_t>(is, "version");
  HPI_ENFORCE(version == kWeightVersion, kSchema, "weight file version ", version, " unsupported");
  const auto len = detail::get_le<std::uint64_t>(is, "header length");
  HPI_ENFORCE(len < (std::uint64_t{1} << 24), kSchema, "implausible header length ", len);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  HPI_ENFORCE(is.gcount() == static_cast<std::streamsize>(len), kSchema, "weight file truncated in header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    ::hpi::detail::throw_error(ErrorCode::kSchema, "weight header: ", e.what());
  }
  const ModelConfig c = config_from_json(header.value("config", nlohmann::json::object()));
  c.validate();
  ModelWeights w;
  w.blocks.resize(c.N);
  const auto& tensors = header.at("tensors");
  std::size_t idx = 0;
  for_each_tensor(c, w, [&](const std::string& name, FixedTensor& t, std::size_t r, std::size_t k) {
    HPI_ENFORCE(idx < tensors.size(), kSchema, "header lists too few tensors");
    const auto& e = tensors[idx++];
    HPI_ENFORCE(e.value("name", "") == name && e.value("rows", 0u) == r && e.value("cols", 0u) == k,
                kSchema, "tensor ", idx - 1, " should be ", name, " ", r, "x", k);
    t = FixedTensor(r, k);
    for (auto& v : t.data) v = detail::get_le<std::uint64_t>(is, name.c_str());
  });
  HPI_ENFORCE(idx == tensors.size(), kSchema, "header lists extra tensors");
  check_weights(c, w);
  return {c, std::move(w)};
}

inline void save_weights_file(const std::string& path, const ModelConfig& c, const ModelWeights& w) {
  std::ofstream os(path, std::ios::binary);
  HPI_ENFORCE(os, kConfig, "cannot write ", path);
  save_weights(os, c, w);
}

inline std::pair<ModelConfig, ModelWeights> load_weights_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  HPI_ENFORCE(is, kConfig, "cannot open weight file ", path);
  return load_weights(is);
}

struct ImportReport {
  double max_abs_error = 0;
  std::size_t saturated = 0;
};

/// Quantizes real-valued weights, given per tensor name as row-major
/// values, to the fixed-point format. Out-of-range values saturate and are
/// counted in the report.
inline ModelWeights import_float(const ModelConfig& c,
                                 const std::map<std::string, std::vector<double>>& values,
                                 ImportReport* report = nullptr) {
  c.validate();
  ModelWeights w;
  w.blocks.resize(c.N);
  ImportReport rep;
  const double ulp = std::ldexp(1.0, -c.ring.frac_bits);
  const double hi = static_cast<double>(c.ring.value_max()) * ulp;
  const double lo = static_cast<double>(c.ring.value_min()) * ulp;
  for_each_tensor(c, w, [&](const std::string& name, FixedTensor& t, std::size_t r, std::size_t k) {
    const auto it = values.find(name);
    HPI_ENFORCE(it != values.end(), kSchema, "import is missing tensor ", name);
    HPI_ENFORCE(it->second.size() == r * k, kSchema, name, " has ", it->second.size(),
                " values, expected ", r * k);
    t = FixedTensor(r, k);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double x = it->second[i];
      HPI_ENFORCE(std::isfinite(x), kSchema, name, "[", i, "] is not finite");
      const double clamped = std::clamp(x, lo, hi);
      if (clamped != x) ++rep.saturated;
      t.data[i] = fx_encode(clamped, c.ring);
      rep.max_abs_error = std::max(rep.max_abs_error, std::fabs(fx_decode(t.data[i], c.ring) - x));
    }
  });
  if (report) *report = rep;
  return w;
}

/// Reads {"tensor name": [row-major values], ...} from a JSON file.
inline ModelWeights import_float_file(const std::string& path, const ModelConfig& c,
                                      ImportReport* report = nullptr) {
  std::ifstream is(path);
  HPI_ENFORCE(is, kConfig, "cannot open ", path);
  std::map<std::string, std::vector<double>> values;
  try {
    values = nlohmann::json::parse(is).get<std::map<std::string, std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    ::hpi::detail::throw_error(ErrorCode::kSchema, path, ": ", e.what());
  }
  return import_float(c, values, report);
}

// ---------------------------------------------------------------------------
// Forward pass pieces shared with the protocol engine

/// One-hot rows with integer (unscaled) ones.
inline FixedTensor one_hot(const std::vector<std::size_t>& tokens, std::size_t vocab) {
  FixedTensor x(tokens.size(), vocab);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    HPI_ENFORCE(tokens[t] < vocab, kOutOfRange, "token ", tokens[t], " outside vocabulary of ", vocab);
    x.at(t, tokens[t]) = 1;
  }
  return x;
}

inline void check_one_hot(const FixedTensor& x, const ModelConfig& c) {
  HPI_ENFORCE(x.rows == c.n && x.cols == c.d_oh, kShapeMismatch, "input is ", x.rows, "x", x.cols,
              ", expected ", c.n, "x", c.d_oh);
  for (std::size_t t = 0; t < x.rows; ++t) {
    std::size_t ones = 0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      HPI_ENFORCE(x.at(t, j) <= 1, kInvalidArgument, "row ", t, " is not one-hot");
      ones += x.at(t, j);
    }
    HPI_ENFORCE(ones == 1, kInvalidArgument, "row ", t, " is not one-hot");
  }
}

/// W_E * delta at f fractional bits; public to the server.
inline FixedTensor embedding_table(const ModelConfig& c, const ModelWeights& w) {
  return truncate(scale(w.W_E, fx_encode(c.delta, c.ring), c.ring), c.ring);
}

inline FixedTensor embed(const ModelConfig& c, const ModelWeights& w, const FixedTensor& onehot) {
  check_one_hot(onehot, c);
  return add(mat_mul(onehot, embedding_table(c, w), c.ring), w.lambda, c.ring);
}

/// Row lookup path; equal to embed().
inline FixedTensor embed_lookup(const ModelConfig& c, const ModelWeights& w,
                                const std::vector<std::size_t>& tokens) {
  const auto table = embedding_table(c, w);
  HPI_ENFORCE(tokens.size() == c.n, kShapeMismatch, tokens.size(), " tokens, expected ", c.n);
  FixedTensor x(c.n, c.d_emb);
  for (std::size_t t = 0; t < c.n; ++t) {
    HPI_ENFORCE(tokens[t] < c.d_oh, kOutOfRange, "token ", tokens[t]);
    for (std::size_t j = 0; j < c.d_emb; ++j) x.at(t, j) = c.ring.reduce(table.at(tokens[t], j) + w.lambda.at(t, j));
  }
  return x;
}

/// 1/sqrt(n) at f fractional bits.
inline Word attention_scale(const ModelConfig& c) {
  return c.ring.from_signed(std::llround(std::ldexp(1.0 / std::sqrt(static_cast<double>(c.n)), c.ring.frac_bits)));
}

/// Circuit specs for the non-linear steps.
namespace specs {

inline nonpoly::SecureFnSpec base(const ModelConfig& c, nonpoly::Fn fn, std::size_t cols,
                                  std::vector<int> shifts) {
  nonpoly::SecureFnSpec s;
  s.fn = fn;
  s.cols = cols;
  s.word_bits = c.ring.modulus_bits;
  s.fmt = {c.ring.value_bits, c.ring.frac_bits};
  s.in_shifts = std::move(shifts);
  return s;
}

// Scores carry 4f fractional bits, times the f-bit attention scale.
inline nonpoly::SecureFnSpec softmax(const ModelConfig& c) {
  return base(c, nonpoly::Fn::kSoftmaxRow, c.n, {4 * c.ring.frac_bits});
}
// Attention output carries 3f bits.
inline nonpoly::SecureFnSpec rescale_attention(const ModelConfig& c) {
  return base(c, nonpoly::Fn::kIdentity, c.d_emb, {2 * c.ring.frac_bits});
}
inline nonpoly::SecureFnSpec add_norm(const ModelConfig& c) {
  return base(c, nonpoly::Fn::kAddLayerNormRow, c.d_emb, {c.ring.frac_bits, 0});
}
inline nonpoly::SecureFnSpec layer_norm(const ModelConfig& c) {
  return base(c, nonpoly::Fn::kLayerNormRow, c.d_emb, {0});
}
// Brings a 2f-bit product back to f bits.
inline nonpoly::SecureFnSpec rescale(const ModelConfig& c) {
  return base(c, nonpoly::Fn::kIdentity, c.d_emb, {c.ring.frac_bits});
}
inline nonpoly::SecureFnSpec activation(const ModelConfig& c) {
  return base(c, c.activation == Activation::kRelu ? nonpoly::Fn::kRelu : nonpoly::Fn::kGelu, c.d_ff,
              {c.ring.frac_bits});
}

}  // namespace specs

/// Named intermediate tensors of a forward pass.
using Trace = std::map<std::string, FixedTensor>;

inline std::string trace_name(std::size_t block, const std::string& what) {
  return "block" + std::to_string(block) + "." + what;
}

inline std::string head_name(std::size_t block, const std::string& what, std::size_t h) {
  return trace_name(block, what) + "." + std::to_string(h);
}

struct ForwardOptions {
  nonpoly::RangePolicy policy = nonpoly::RangePolicy::kPermissive;
  Trace* trace = nullptr;
  std::size_t* flagged_rows = nullptr;
};

/// Fixed-point reference. Logits carry 2f fractional bits.
inline FixedTensor reference_forward(const ModelConfig& c, const ModelWeights& w,
                                     const std::vector<std::size_t>& tokens, ForwardOptions opt = {}) {
  c.validate();
  check_weights(c, w);
  HPI_ENFORCE(tokens.size() == c.n, kShapeMismatch, tokens.size(), " tokens, expected ", c.n);
  const auto& p = c.ring;
  std::size_t flagged = 0;
  auto keep = [&](const std::string& name, const FixedTensor& t) {
    if (opt.trace) (*opt.trace)[name] = t;
  };
  auto secure = [&](const nonpoly::SecureFnSpec& s, std::vector<FixedTensor> in) {
    std::size_t f = 0;
    auto out = nonpoly::eval_reference(s, in, &f, opt.policy);
    flagged += f;
    return out;
  };

  FixedTensor x = embed(c, w, one_hot(tokens, c.d_oh));
  keep("X1", x);
  const Word eta = attention_scale(c);
  const std::size_t dh = c.d_head();
  const bool pre = c.norm == Norm::kPre;
  for (std::size_t b = 0; b < c.N; ++b) {
    const auto& blk = w.blocks[b];
    const auto u = pre ? secure(specs::layer_norm(c), {x}) : x;
    if (pre) keep(trace_name(b, "Xn"), u);
    const auto q = mat_mul(u, blk.W_Q, p), k = mat_mul(u, blk.W_K, p), v = mat_mul(u, blk.W_V, p);
    keep(trace_name(b, "Q"), q);
    keep(trace_name(b, "K"), k);
    keep(trace_name(b, "V"), v);
    std::vector<FixedTensor> heads;
    for (std::size_t h = 0; h < c.H; ++h) {
      const auto qh = col_slice(q, h * dh, dh), kh = col_slice(k, h * dh, dh);
      const auto s = mat_mul(qh, transpose(kh), p);
      keep(head_name(b, "S", h), s);
      const auto a = secure(specs::softmax(c), {scale(s, eta, p)});
      keep(head_name(b, "A", h), a);
      heads.push_back(mat_mul(a, col_slice(v, h * dh, dh), p));
    }
    const auto o = hconcat(heads);
    keep(trace_name(b, "O"), o);
    const auto o1 = secure(specs::rescale_attention(c), {o});
    const auto y = mat_mul(o1, blk.W_O, p);
    keep(trace_name(b, "Y"), y);
    const auto z = pre ? add(x, secure(specs::rescale(c), {y}), p) : secure(specs::add_norm(c), {y, x});
    keep(trace_name(b, "Z"), z);
    const auto zn = pre ? secure(specs::layer_norm(c), {z}) : z;
    if (pre) keep(trace_name(b, "Zn"), zn);
    const auto f1 = mat_mul(zn, blk.W_1, p);
    keep(trace_name(b, "F1"), f1);
    const auto hd = secure(specs::activation(c), {f1});
    keep(trace_name(b, "Hd"), hd);
    const auto f2 = mat_mul(hd, blk.W_2, p);
    keep(trace_name(b, "F2"), f2);
    x = pre ? add(z, secure(specs::rescale(c), {f2}), p) : secure(specs::add_norm(c), {f2, z});
    keep(trace_name(b, "X"), x);
  }
  if (pre) {
    x = secure(specs::layer_norm(c), {x});
    keep("Xf", x);
  }
  const auto logits = mat_mul(x, w.W_out, p);
  keep("logits", logits);
  if (opt.flagged_rows) *opt.flagged_rows = flagged;
  HPI_ENFORCE(opt.policy == nonpoly::RangePolicy::kPermissive || flagged == 0, kRangeViolation,
              flagged, " rows left the representable range");
  return logits;
}

/// Logits as reals.
inline std::vector<double> decode_logits(const ModelConfig& c, const FixedTensor& logits) {
  return decode_matrix(logits, c.ring, 2 * c.ring.frac_bits);
}

}  // namespace hpi::model
