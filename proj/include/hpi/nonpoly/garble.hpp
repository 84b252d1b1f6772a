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

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <memory>
#include <vector>

#include <sodium.h>

#include "hpi/error.hpp"
#include "hpi/nonpoly/circuit.hpp"

namespace hpi::nonpoly {

struct Block {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;

  bool lsb() const { return (lo & 1) != 0; }
  Block operator^(const Block& o) const { return {lo ^ o.lo, hi ^ o.hi}; }
  Block& operator^=(const Block& o) {
    lo ^= o.lo;
    hi ^= o.hi;
    return *this;
  }
  friend bool operator==(const Block&, const Block&) = default;
};

static_assert(sizeof(Block) == 16);

inline constexpr std::size_t kLabelBytes = sizeof(Block);

inline void ensure_sodium() {
  static const int ok = sodium_init();
  HPI_ENFORCE(ok >= 0, kInternal, "libsodium initialisation failed");
}

/// Multiplication by x in GF(2^128).
inline Block gf_double(Block b) {
  const std::uint64_t carry = b.hi >> 63;
  return {(b.lo << 1) ^ (carry * 0x87), (b.hi << 1) | (b.lo >> 63)};
}

/// Fixed-key AES-128 permutation; H(x) = AES_k(x) ^ x.
class FixedKeyHash {
 public:
  FixedKeyHash() : ctx_(EVP_CIPHER_CTX_new(), EVP_CIPHER_CTX_free) {
    static constexpr unsigned char kKey[16] = {0x61, 0x7e, 0x8d, 0xa2, 0xa0, 0x51, 0x1e, 0x96,
                                               0x5e, 0x41, 0xc2, 0x9b, 0x15, 0x3f, 0xc7, 0x7a};
    HPI_ENFORCE(ctx_ && EVP_EncryptInit_ex(ctx_.get(), EVP_aes_128_ecb(), nullptr, kKey, nullptr) == 1,
                kInternal, "AES setup failed");
    EVP_CIPHER_CTX_set_padding(ctx_.get(), 0);
  }

  void permute(const Block* in, Block* out, std::size_t n) const {
    int len = 0;
    HPI_ENFORCE(EVP_EncryptUpdate(ctx_.get(), reinterpret_cast<unsigned char*>(out), &len,
                                  reinterpret_cast<const unsigned char*>(in),
                                  static_cast<int>(n * sizeof(Block))) == 1,
                kInternal, "AES failed");
  }

  /// Tweakable hash of two labels.
  Block operator()(Block a, Block b, std::uint64_t tweak) const {
    const Block k = gf_double(a) ^ gf_double(gf_double(b)) ^ Block{tweak, 0};
    Block out;
    permute(&k, &out, 1);
    return out ^ k;
  }

  /// Four hashes at once, for garbling one AND gate.
  void hash4(const std::array<Block, 4>& a, const std::array<Block, 4>& b, std::uint64_t tweak,
             std::array<Block, 4>& out) const {
    std::array<Block, 4> k;
    for (int i = 0; i < 4; ++i) k[i] = gf_double(a[i]) ^ gf_double(gf_double(b[i])) ^ Block{tweak, 0};
    permute(k.data(), out.data(), 4);
    for (int i = 0; i < 4; ++i) out[i] ^= k[i];
  }

 private:
  std::unique_ptr<EVP_CIPHER_CTX, decltype(&EVP_CIPHER_CTX_free)> ctx_;
};

inline constexpr std::uint64_t kOutputTweak = std::uint64_t{1} << 63;

/// Material the garbler sends: four rows per AND gate and, per output, the
/// digests of both labels so the evaluator can decode and detect tampering.
struct GarbledCircuit {
  std::vector<Block> tables;
  std::vector<std::array<Block, 2>> output_digests;

  std::size_t table_bytes() const { return tables.size() * sizeof(Block); }
  std::size_t decode_bytes() const { return output_digests.size() * 2 * sizeof(Block); }
};

/// Kept by the garbler: the global offset and every input's zero label.
struct GarblerKeys {
  Block delta;
  std::vector<Block> input_zero;

  Block label(std::size_t wire, bool bit) const {
    return bit ? input_zero[wire] ^ delta : input_zero[wire];
  }
};

/// Free-XOR, point-and-permute garbling with 4-row AND tables. Labels come
/// from a stream keyed by `seed`; callers draw the seed from a CSPRNG.
inline std::pair<GarbledCircuit, GarblerKeys> garble(const Circuit& c,
                                                     const std::array<unsigned char, 32>& seed) {
  ensure_sodium();
  const FixedKeyHash hash;
  std::uint64_t and_gates = c.and_count();
  std::vector<Block> rnd(1 + c.num_inputs() + and_gates);
  randombytes_buf_deterministic(rnd.data(), rnd.size() * sizeof(Block), seed.data());
  std::size_t next = 0;

  GarblerKeys keys;
  keys.delta = rnd[next++];
  keys.delta.lo |= 1;
  std::vector<Block> zero(c.num_wires);
  for (std::uint32_t i = 0; i < c.num_inputs(); ++i) zero[i] = rnd[next++];
  keys.input_zero.assign(zero.begin(), zero.begin() + c.num_inputs());

  GarbledCircuit gc;
  gc.tables.reserve(4 * and_gates);
  std::uint64_t gid = 0;
  std::array<Block, 4> la, lb, h;
  for (const auto& g : c.gates) {
    switch (g.op) {
      case GateOp::kXor: zero[g.out] = zero[g.in0] ^ zero[g.in1]; break;
      case GateOp::kInv: zero[g.out] = zero[g.in0] ^ keys.delta; break;
      case GateOp::kAnd: {
        const Block a0 = zero[g.in0], b0 = zero[g.in1];
        const Block c0 = rnd[next++];
        zero[g.out] = c0;
        for (int x = 0; x < 2; ++x)
          for (int y = 0; y < 2; ++y) {
            la[2 * x + y] = x ? a0 ^ keys.delta : a0;
            lb[2 * x + y] = y ? b0 ^ keys.delta : b0;
          }
        hash.hash4(la, lb, gid, h);
        std::array<Block, 4> rows;
        for (int x = 0; x < 2; ++x)
          for (int y = 0; y < 2; ++y) {
            const int i = 2 * x + y;
            const int row = 2 * la[i].lsb() + lb[i].lsb();
            rows[row] = h[i] ^ ((x & y) ? c0 ^ keys.delta : c0);
          }
        gc.tables.insert(gc.tables.end(), rows.begin(), rows.end());
        ++gid;
        break;
      }
    }
  }
  gc.output_digests.reserve(c.outputs.size());
  for (std::size_t i = 0; i < c.outputs.size(); ++i) {
    const auto o = c.outputs[i];
    if (o < 0) {
      gc.output_digests.push_back({Block{}, Block{}});
      continue;
    }
    const Block l0 = zero[o], l1 = zero[o] ^ keys.delta;
    gc.output_digests.push_back({hash(l0, Block{}, kOutputTweak | i), hash(l1, Block{}, kOutputTweak | i)});
  }
  return {std::move(gc), std::move(keys)};
}

/// Evaluates with one label per input wire and decodes every output.
inline std::vector<bool> gc_eval(const Circuit& c, const GarbledCircuit& gc,
                                 const std::vector<Block>& input_labels) {
  HPI_ENFORCE(input_labels.size() == c.num_inputs(), kShapeMismatch, "expected ", c.num_inputs(),
              " input labels, got ", input_labels.size());
  HPI_ENFORCE(gc.tables.size() == 4 * c.and_count() && gc.output_digests.size() == c.outputs.size(),
              kDecodeFailure, "garbled material does not match the circuit");
  const FixedKeyHash hash;
  std::vector<Block> w(c.num_wires);
  std::copy(input_labels.begin(), input_labels.end(), w.begin());
  std::uint64_t gid = 0;
  for (const auto& g : c.gates) {
    switch (g.op) {
      case GateOp::kXor: w[g.out] = w[g.in0] ^ w[g.in1]; break;
      case GateOp::kInv: w[g.out] = w[g.in0]; break;
      case GateOp::kAnd: {
        const Block a = w[g.in0], b = w[g.in1];
        const int row = 2 * a.lsb() + b.lsb();
        w[g.out] = hash(a, b, gid) ^ gc.tables[4 * gid + static_cast<std::uint64_t>(row)];
        ++gid;
        break;
      }
    }
  }
  std::vector<bool> out;
  out.reserve(c.outputs.size());
  for (std::size_t i = 0; i < c.outputs.size(); ++i) {
    const auto o = c.outputs[i];
    if (o < 0) {
      out.push_back(o == kConstOne);
      continue;
    }
    const Block d = hash(w[o], Block{}, kOutputTweak | i);
    if (d == gc.output_digests[i][0]) {
      out.push_back(false);
    } else if (d == gc.output_digests[i][1]) {
      out.push_back(true);
    } else {
      ::hpi::detail::throw_error(ErrorCode::kDecodeFailure, "output ", i, " label matches neither digest");
    }
  }
  return out;
}

}  // namespace hpi::nonpoly
