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

#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <sodium.h>

#include "hpi/error.hpp"
#include "hpi/nonpoly/circuit.hpp"
#include "hpi/nonpoly/fixed_int.hpp"
#include "hpi/nonpoly/functions.hpp"
#include "hpi/nonpoly/garble.hpp"
#include "hpi/nonpoly/ot.hpp"
#include "hpi/numeric.hpp"

// Row-wise secure evaluation of y = F(x) on additive shares. The client
// garbles, the server evaluates and learns F(x) - mask; the client keeps
// the mask. Each row is one circuit: reconstruct (and rescale) the inputs,
// apply F, subtract the client's fresh mask.

namespace hpi::nonpoly {

enum class Fn : std::uint8_t {
  kIdentity,
  kRelu,
  kGelu,
  kSoftmaxRow,
  kReciprocal,
  kExpApprox,
  kMaxReduce,
  kLayerNormRow,
  // layernorm_row(saturate(x0 + x1)); the residual join.
  kAddLayerNormRow,
};

inline const char* fn_name(Fn f) {
  switch (f) {
    case Fn::kIdentity: return "identity";
    case Fn::kRelu: return "relu";
    case Fn::kGelu: return "gelu";
    case Fn::kSoftmaxRow: return "softmax_row";
    case Fn::kReciprocal: return "reciprocal";
    case Fn::kExpApprox: return "exp_approx";
    case Fn::kMaxReduce: return "max_reduce";
    case Fn::kLayerNormRow: return "layernorm_row";
    case Fn::kAddLayerNormRow: return "add_layernorm_row";
  }
  return "?";
}

inline int fn_arity(Fn f) { return f == Fn::kAddLayerNormRow ? 2 : 1; }

struct SecureFnSpec {
  Fn fn = Fn::kIdentity;
  std::size_t cols = 1;
  // Ring width of the shares.
  int word_bits = 64;
  FixedFormat fmt{};
  // Per input: arithmetic right shift applied right after reconstruction,
  // before saturating into fmt.width bits.
  std::vector<int> in_shifts{0};
  // Identity only: keep the full ring word, no shift or saturation.
  bool raw = false;

  std::size_t out_cols() const { return fn == Fn::kMaxReduce ? 1 : cols; }

  void validate() const {
    HPI_ENFORCE(cols >= 1, kShapeMismatch, "secure fn over empty rows");
    HPI_ENFORCE(word_bits >= 2 && word_bits <= 64, kInvalidArgument, "word_bits ", word_bits);
    HPI_ENFORCE(fmt.width >= 2 && fmt.width <= word_bits, kInvalidArgument, "value width ",
                fmt.width, " exceeds ring width ", word_bits);
    HPI_ENFORCE(static_cast<int>(in_shifts.size()) == fn_arity(fn), kInvalidArgument, fn_name(fn),
                " takes ", fn_arity(fn), " inputs, ", in_shifts.size(), " shifts given");
    for (int s : in_shifts)
      HPI_ENFORCE(s >= 0 && s < word_bits, kInvalidArgument, "input shift ", s);
    HPI_ENFORCE(!raw || fn == Fn::kIdentity, kInvalidArgument, "raw mode is identity-only");
  }

  std::string key() const {
    std::ostringstream os;
    os << fn_name(fn) << '/' << cols << '/' << word_bits << '/' << fmt.width << '/' << fmt.frac << '/'
       << raw;
    for (int s : in_shifts) os << '/' << s;
    return os.str();
  }
};

enum class Backend : std::uint8_t {
  // Computes the identical function on cleartext bits; costs are taken
  // from the circuit that the garbled backend would run.
  kSemantic,
  kGarbled,
};

enum class RangePolicy : std::uint8_t {
  kStrict,      // out-of-domain rows raise kRangeViolation
  kPermissive,  // rows are clamped and counted
};

// ---------------------------------------------------------------------------
// The row program, generic over the bit context

template <class Ctx>
Bits<Ctx> stage_in(Ctx& ctx, const SecureFnSpec& spec, int input, const Bits<Ctx>& client,
                   const Bits<Ctx>& server, typename Ctx::Bit& flag) {
  const auto x = add(ctx, client, server);
  if (spec.raw) return x;
  typename Ctx::Bit of;
  auto v = saturate(ctx, ashr(ctx, x, spec.in_shifts[static_cast<std::size_t>(input)]),
                    spec.fmt.width, &of);
  raise(ctx, flag, of);
  return v;
}

template <class Ctx>
std::vector<Bits<Ctx>> apply_fn(Ctx& ctx, const SecureFnSpec& spec,
                                const std::vector<std::vector<Bits<Ctx>>>& in,
                                typename Ctx::Bit& flag) {
  const auto& x = in[0];
  std::vector<Bits<Ctx>> out;
  switch (spec.fn) {
    case Fn::kIdentity: return x;
    case Fn::kRelu:
      for (const auto& v : x) out.push_back(relu(ctx, v));
      return out;
    case Fn::kGelu:
      for (const auto& v : x) out.push_back(gelu(ctx, v, spec.fmt));
      return out;
    case Fn::kSoftmaxRow: return softmax_row(ctx, x, spec.fmt, flag);
    case Fn::kReciprocal:
      for (const auto& v : x) out.push_back(reciprocal(ctx, v, spec.fmt, flag));
      return out;
    case Fn::kExpApprox:
      for (const auto& v : x) out.push_back(exp_approx(ctx, v, spec.fmt, flag));
      return out;
    case Fn::kMaxReduce: return {max_reduce(ctx, x)};
    case Fn::kLayerNormRow: return layernorm_row(ctx, x, spec.fmt, flag);
    case Fn::kAddLayerNormRow: {
      std::vector<Bits<Ctx>> joined;
      const int w = spec.fmt.width;
      for (std::size_t j = 0; j < x.size(); ++j) {
        typename Ctx::Bit of;
        joined.push_back(
            saturate(ctx, add(ctx, resize(ctx, x[j], w + 1), resize(ctx, in[1][j], w + 1)), w, &of));
        raise(ctx, flag, of);
      }
      return layernorm_row(ctx, joined, spec.fmt, flag);
    }
  }
  return out;
}

/// One row: client[k][j], server[k][j] are word_bits-bit shares of input k,
/// column j; masks[j] is the client's fresh mask. Returns the masked outputs
/// followed by nothing else; the range flag is written to `flag`.
template <class Ctx>
std::vector<Bits<Ctx>> row_program(Ctx& ctx, const SecureFnSpec& spec,
                                   const std::vector<std::vector<Bits<Ctx>>>& client,
                                   const std::vector<std::vector<Bits<Ctx>>>& server,
                                   const std::vector<Bits<Ctx>>& masks, typename Ctx::Bit& flag) {
  flag = ctx.constant(false);
  std::vector<std::vector<Bits<Ctx>>> values(client.size());
  for (std::size_t k = 0; k < client.size(); ++k)
    for (std::size_t j = 0; j < spec.cols; ++j)
      values[k].push_back(stage_in(ctx, spec, static_cast<int>(k), client[k][j], server[k][j], flag));
  const auto y = apply_fn(ctx, spec, values, flag);
  std::vector<Bits<Ctx>> out;
  out.reserve(y.size());
  for (std::size_t j = 0; j < y.size(); ++j)
    out.push_back(sub(ctx, resize(ctx, y[j], spec.word_bits), masks[j]));
  return out;
}

// ---------------------------------------------------------------------------
// Circuits

/// (a + b) mod 2^w; a from the garbler, b from the evaluator.
inline Circuit reconstruct_add_circuit(int w) {
  HPI_ENFORCE(w >= 1 && w <= 64, kInvalidArgument, "bitwidth ", w);
  CircuitBuilder b;
  Bits<CircuitBuilder> x, y;
  for (int i = 0; i < w; ++i) x.push_back(b.garbler_input());
  for (int i = 0; i < w; ++i) y.push_back(b.evaluator_input());
  for (auto o : add(b, x, y)) b.output(o);
  return std::move(b).finish();
}

/// (y - r) mod 2^w; r from the garbler (client), y from the evaluator.
inline Circuit remask_sub_circuit(int w) {
  HPI_ENFORCE(w >= 1 && w <= 64, kInvalidArgument, "bitwidth ", w);
  CircuitBuilder b;
  Bits<CircuitBuilder> r, y;
  for (int i = 0; i < w; ++i) r.push_back(b.garbler_input());
  for (int i = 0; i < w; ++i) y.push_back(b.evaluator_input());
  for (auto o : sub(b, y, r)) b.output(o);
  return std::move(b).finish();
}

/// Garbler wires: client shares (input-major, column-major within), then
/// masks. Evaluator wires: server shares. Outputs: masked words, then the
/// range flag.
inline Circuit build_row_circuit(const SecureFnSpec& spec) {
  spec.validate();
  CircuitBuilder b;
  const int arity = fn_arity(spec.fn);
  auto words = [&](std::size_t count, bool garbler) {
    std::vector<Bits<CircuitBuilder>> out(count);
    for (auto& w : out)
      for (int i = 0; i < spec.word_bits; ++i) w.push_back(garbler ? b.garbler_input() : b.evaluator_input());
    return out;
  };
  std::vector<std::vector<Bits<CircuitBuilder>>> client, server;
  for (int k = 0; k < arity; ++k) client.push_back(words(spec.cols, true));
  const auto masks = words(spec.out_cols(), true);
  for (int k = 0; k < arity; ++k) server.push_back(words(spec.cols, false));
  CircuitBuilder::Bit flag;
  for (const auto& o : row_program(b, spec, client, server, masks, flag))
    for (auto bit : o) b.output(bit);
  b.output(flag);
  return std::move(b).finish();
}

inline std::shared_ptr<const Circuit> row_circuit(const SecureFnSpec& spec) {
  static std::mutex mu;
  static std::map<std::string, std::shared_ptr<const Circuit>> cache;
  const std::string key = spec.key();
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  auto c = std::make_shared<const Circuit>(build_row_circuit(spec));
  std::lock_guard lock(mu);
  return cache.emplace(key, std::move(c)).first->second;
}

// ---------------------------------------------------------------------------
// Cost model

struct GcCost {
  std::uint64_t rows = 0;
  std::uint64_t and_gates = 0;
  std::uint64_t xor_gates = 0;
  std::uint64_t ot_count = 0;
  // Offline, client to server: garbled tables and output digests.
  std::uint64_t material_bytes = 0;
  // Online, client to server: labels of the client's own input bits.
  std::uint64_t label_bytes = 0;
  // Online OT traffic, split by direction.
  std::uint64_t ot_sender_bytes = 0;
  std::uint64_t ot_receiver_bytes = 0;

  std::uint64_t online_bytes() const { return label_bytes + ot_sender_bytes + ot_receiver_bytes; }
  std::uint64_t total_bytes() const { return material_bytes + online_bytes(); }

  friend bool operator==(const GcCost&, const GcCost&) = default;
};

/// Closed-form traffic for `rows` evaluations of one row circuit, with all
/// OTs of the call in one batch.
inline GcCost gc_cost(const Circuit& c, std::uint64_t rows) {
  GcCost k;
  k.rows = rows;
  k.and_gates = rows * c.and_count();
  k.xor_gates = rows * c.xor_count();
  k.ot_count = rows * c.evaluator_inputs;
  k.material_bytes = rows * (4 * kLabelBytes * c.and_count() + 2 * kLabelBytes * c.outputs.size());
  k.label_bytes = rows * kLabelBytes * c.garbler_inputs;
  const auto t = ot_traffic(k.ot_count);
  k.ot_sender_bytes = t.sender_setup + t.sender;
  k.ot_receiver_bytes = t.receiver;
  return k;
}

// ---------------------------------------------------------------------------
// Evaluation

struct SecureFnResult {
  FixedTensor server;  // F(x) - mask
  FixedTensor client;  // mask
  std::size_t flagged_rows = 0;
  GcCost cost;
};

namespace detail {

inline std::vector<bool> word_bits_of(Word w, int bits) {
  std::vector<bool> out(static_cast<std::size_t>(bits));
  for (int i = 0; i < bits; ++i) out[static_cast<std::size_t>(i)] = ((w >> i) & 1) != 0;
  return out;
}

inline Word word_from_bits(std::vector<bool>::const_iterator it, int bits) {
  Word w = 0;
  for (int i = 0; i < bits; ++i, ++it)
    if (*it) w |= Word{1} << i;
  return w;
}

inline void check_inputs(const SecureFnSpec& spec, std::span<const FixedTensor> a,
                         std::span<const FixedTensor> b, const FixedTensor& masks) {
  spec.validate();
  const auto arity = static_cast<std::size_t>(fn_arity(spec.fn));
  HPI_ENFORCE(a.size() == arity && b.size() == arity, kShapeMismatch, fn_name(spec.fn), " takes ",
              arity, " inputs");
  const std::size_t rows = a[0].rows;
  for (std::size_t k = 0; k < arity; ++k)
    HPI_ENFORCE(a[k].rows == rows && b[k].rows == rows && a[k].cols == spec.cols &&
                    b[k].cols == spec.cols,
                kShapeMismatch, "input ", k, " shares are ", a[k].rows, "x", a[k].cols, " and ",
                b[k].rows, "x", b[k].cols, ", expected ", rows, "x", spec.cols);
  HPI_ENFORCE(masks.rows == rows && masks.cols == spec.out_cols(), kShapeMismatch, "masks are ",
              masks.rows, "x", masks.cols, ", expected ", rows, "x", spec.out_cols());
}

}  // namespace detail

/// Both backends return identical shares for identical inputs and masks.
inline SecureFnResult eval_secure(const SecureFnSpec& spec, std::span<const FixedTensor> client_shares,
                                  std::span<const FixedTensor> server_shares, const FixedTensor& masks,
                                  Backend backend, RangePolicy policy = RangePolicy::kStrict) {
  detail::check_inputs(spec, client_shares, server_shares, masks);
  const auto circuit = row_circuit(spec);
  const std::size_t rows = masks.rows;
  const std::size_t arity = client_shares.size();
  const int wb = spec.word_bits;
  const Word word_mask = wb == 64 ? ~Word{0} : (Word{1} << wb) - 1;

  SecureFnResult res;
  res.server = FixedTensor(rows, spec.out_cols());
  res.client = masks;
  res.cost = gc_cost(*circuit, rows);

  // Per-row input bit vectors in circuit wire order.
  auto garbler_bits = [&](std::size_t r) {
    std::vector<bool> bits;
    bits.reserve(circuit->garbler_inputs);
    for (std::size_t k = 0; k < arity; ++k)
      for (std::size_t j = 0; j < spec.cols; ++j)
        for (bool bit : detail::word_bits_of(client_shares[k].at(r, j) & word_mask, wb)) bits.push_back(bit);
    for (std::size_t j = 0; j < spec.out_cols(); ++j)
      for (bool bit : detail::word_bits_of(masks.at(r, j) & word_mask, wb)) bits.push_back(bit);
    return bits;
  };
  auto evaluator_bits = [&](std::size_t r) {
    std::vector<bool> bits;
    bits.reserve(circuit->evaluator_inputs);
    for (std::size_t k = 0; k < arity; ++k)
      for (std::size_t j = 0; j < spec.cols; ++j)
        for (bool bit : detail::word_bits_of(server_shares[k].at(r, j) & word_mask, wb)) bits.push_back(bit);
    return bits;
  };

  std::vector<std::vector<bool>> outputs(rows);
  if (backend == Backend::kSemantic) {
    PlainCtx ctx;
    for (std::size_t r = 0; r < rows; ++r) {
      const auto g = garbler_bits(r), e = evaluator_bits(r);
      std::vector<std::vector<Bits<PlainCtx>>> client(arity), server(arity);
      std::vector<Bits<PlainCtx>> mask_words;
      std::size_t gi = 0, ei = 0;
      for (std::size_t k = 0; k < arity; ++k)
        for (std::size_t j = 0; j < spec.cols; ++j) {
          client[k].emplace_back(g.begin() + static_cast<std::ptrdiff_t>(gi), g.begin() + static_cast<std::ptrdiff_t>(gi + wb));
          gi += static_cast<std::size_t>(wb);
          server[k].emplace_back(e.begin() + static_cast<std::ptrdiff_t>(ei), e.begin() + static_cast<std::ptrdiff_t>(ei + wb));
          ei += static_cast<std::size_t>(wb);
        }
      for (std::size_t j = 0; j < spec.out_cols(); ++j) {
        mask_words.emplace_back(g.begin() + static_cast<std::ptrdiff_t>(gi), g.begin() + static_cast<std::ptrdiff_t>(gi + wb));
        gi += static_cast<std::size_t>(wb);
      }
      bool flag = false;
      auto& out = outputs[r];
      for (const auto& w : row_program(ctx, spec, client, server, mask_words, flag))
        out.insert(out.end(), w.begin(), w.end());
      out.push_back(flag);
    }
  } else {
    ensure_sodium();
    // Client: garble every row and send tables, digests and its own labels.
    std::vector<GarbledCircuit> material(rows);
    std::vector<GarblerKeys> keys(rows);
    std::vector<std::array<Block, 2>> ot_msgs;
    std::vector<std::vector<Block>> labels(rows);
    std::uint64_t sent_material = 0, sent_labels = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      std::array<unsigned char, 32> seed;
      randombytes_buf(seed.data(), seed.size());
      std::tie(material[r], keys[r]) = garble(*circuit, seed);
      sent_material += material[r].table_bytes() + material[r].decode_bytes();
      const auto g = garbler_bits(r);
      for (std::size_t i = 0; i < g.size(); ++i) labels[r].push_back(keys[r].label(i, g[i]));
      sent_labels += g.size() * kLabelBytes;
      for (std::uint32_t i = 0; i < circuit->evaluator_inputs; ++i) {
        const std::size_t wire = circuit->garbler_inputs + i;
        ot_msgs.push_back({keys[r].label(wire, false), keys[r].label(wire, true)});
      }
    }
    // Server: fetch labels for its share bits by OT.
    std::vector<bool> choices;
    for (std::size_t r = 0; r < rows; ++r) {
      const auto e = evaluator_bits(r);
      choices.insert(choices.end(), e.begin(), e.end());
    }
    OtSender sender;
    OtReceiver receiver;
    const auto points = receiver.choose(sender.setup(), choices);
    const auto masked = sender.respond(points, ot_msgs);
    const auto received = receiver.finish(masked);
    const auto traffic = ot_traffic(choices.size());
    HPI_ENFORCE(sent_material == res.cost.material_bytes && sent_labels == res.cost.label_bytes &&
                    points.size() * kOtPointBytes == res.cost.ot_receiver_bytes &&
                    kOtPointBytes * (choices.empty() ? 0 : 1) + masked.size() * 2 * kLabelBytes ==
                        res.cost.ot_sender_bytes &&
                    traffic.total() == res.cost.ot_sender_bytes + res.cost.ot_receiver_bytes,
                kInternal, "garbled traffic disagrees with the cost model");
    std::size_t next = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      auto in = labels[r];
      for (std::uint32_t i = 0; i < circuit->evaluator_inputs; ++i) in.push_back(received[next++]);
      outputs[r] = gc_eval(*circuit, material[r], in);
    }
  }

  for (std::size_t r = 0; r < rows; ++r) {
    const auto& out = outputs[r];
    for (std::size_t j = 0; j < spec.out_cols(); ++j)
      res.server.at(r, j) = detail::word_from_bits(out.begin() + static_cast<std::ptrdiff_t>(j * wb), wb);
    if (out.back()) ++res.flagged_rows;
  }
  HPI_ENFORCE(policy == RangePolicy::kPermissive || res.flagged_rows == 0, kRangeViolation,
              fn_name(spec.fn), ": ", res.flagged_rows, " of ", rows,
              " rows left the representable range or the function domain");
  return res;
}

/// Cleartext reference with the identical arithmetic: the whole value on one
/// side, a zero share and a zero mask on the other.
inline FixedTensor eval_reference(const SecureFnSpec& spec, std::span<const FixedTensor> inputs,
                                  std::size_t* flagged_rows = nullptr,
                                  RangePolicy policy = RangePolicy::kPermissive) {
  HPI_ENFORCE(!inputs.empty(), kShapeMismatch, "no inputs");
  std::vector<FixedTensor> zeros;
  for (const auto& x : inputs) zeros.emplace_back(x.rows, x.cols);
  const FixedTensor masks(inputs[0].rows, spec.out_cols());
  const auto r = eval_secure(spec, inputs, zeros, masks, Backend::kSemantic, policy);
  if (flagged_rows) *flagged_rows = r.flagged_rows;
  return r.server;
}

}  // namespace hpi::nonpoly
