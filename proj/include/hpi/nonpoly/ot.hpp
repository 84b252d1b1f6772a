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

#include <array>
#include <cstdint>
#include <cstring>
#include <vector>

#include <sodium.h>

#include "hpi/error.hpp"
#include "hpi/nonpoly/garble.hpp"

// Simplest OT (Chou-Orlandi) over ristretto255. One sender point per batch,
// one receiver point per choice. Semi-honest.

namespace hpi::nonpoly {

using Point = std::array<unsigned char, crypto_core_ristretto255_BYTES>;
using Scalar = std::array<unsigned char, crypto_core_ristretto255_SCALARBYTES>;

inline constexpr std::size_t kOtPointBytes = crypto_core_ristretto255_BYTES;

/// Bytes on the wire for a batch of k transfers of 16-byte messages.
struct OtTraffic {
  std::size_t sender_setup = 0;  // A
  std::size_t receiver = 0;      // one point per choice
  std::size_t sender = 0;        // two masked messages per choice

  std::size_t total() const { return sender_setup + receiver + sender; }
};

inline OtTraffic ot_traffic(std::size_t k) {
  if (k == 0) return {};
  return {kOtPointBytes, k * kOtPointBytes, k * 2 * kLabelBytes};
}

namespace detail {

inline Block ot_key(std::size_t index, const Point& a, const Point& b, const Point& shared) {
  unsigned char out[16];
  crypto_generichash_state st;
  crypto_generichash_init(&st, nullptr, 0, sizeof(out));
  std::uint64_t idx = index;
  crypto_generichash_update(&st, reinterpret_cast<const unsigned char*>(&idx), sizeof(idx));
  crypto_generichash_update(&st, a.data(), a.size());
  crypto_generichash_update(&st, b.data(), b.size());
  crypto_generichash_update(&st, shared.data(), shared.size());
  crypto_generichash_final(&st, out, sizeof(out));
  Block k;
  std::memcpy(&k, out, sizeof(k));
  return k;
}

inline Point scalar_mult(const Scalar& s, const Point& p) {
  Point out;
  HPI_ENFORCE(crypto_scalarmult_ristretto255(out.data(), s.data(), p.data()) == 0, kDecodeFailure,
              "degenerate OT point");
  return out;
}

}  // namespace detail

class OtSender {
 public:
  OtSender() {
    ensure_sodium();
    crypto_core_ristretto255_scalar_random(a_.data());
    HPI_ENFORCE(crypto_scalarmult_ristretto255_base(big_a_.data(), a_.data()) == 0, kInternal,
                "OT setup failed");
    aa_ = detail::scalar_mult(a_, big_a_);
  }

  const Point& setup() const { return big_a_; }

  /// Masks both messages of every transfer under keys derived from the
  /// receiver's points.
  std::vector<std::array<Block, 2>> respond(const std::vector<Point>& bs,
                                            const std::vector<std::array<Block, 2>>& msgs) const {
    HPI_ENFORCE(bs.size() == msgs.size(), kShapeMismatch, "OT batch sizes differ: ", bs.size(),
                " points, ", msgs.size(), " message pairs");
    std::vector<std::array<Block, 2>> out(bs.size());
    for (std::size_t i = 0; i < bs.size(); ++i) {
      HPI_ENFORCE(crypto_core_ristretto255_is_valid_point(bs[i].data()) == 1, kDecodeFailure,
                  "invalid OT point from receiver");
      const Point ab = detail::scalar_mult(a_, bs[i]);
      Point ab1;
      crypto_core_ristretto255_sub(ab1.data(), ab.data(), aa_.data());
      out[i][0] = msgs[i][0] ^ detail::ot_key(i, big_a_, bs[i], ab);
      out[i][1] = msgs[i][1] ^ detail::ot_key(i, big_a_, bs[i], ab1);
    }
    return out;
  }

 private:
  Scalar a_;
  Point big_a_;
  Point aa_;
};

class OtReceiver {
 public:
  OtReceiver() { ensure_sodium(); }

  std::vector<Point> choose(const Point& a, const std::vector<bool>& choices) {
    HPI_ENFORCE(crypto_core_ristretto255_is_valid_point(a.data()) == 1, kDecodeFailure,
                "invalid OT point from sender");
    a_ = a;
    choices_ = choices;
    b_.resize(choices.size());
    std::vector<Point> out(choices.size());
    for (std::size_t i = 0; i < choices.size(); ++i) {
      crypto_core_ristretto255_scalar_random(b_[i].data());
      Point bg;
      HPI_ENFORCE(crypto_scalarmult_ristretto255_base(bg.data(), b_[i].data()) == 0, kInternal,
                  "OT choose failed");
      if (choices[i])
        crypto_core_ristretto255_add(out[i].data(), bg.data(), a.data());
      else
        out[i] = bg;
    }
    bs_ = out;
    return out;
  }

  std::vector<Block> finish(const std::vector<std::array<Block, 2>>& masked) const {
    HPI_ENFORCE(masked.size() == choices_.size(), kShapeMismatch, "OT response has ", masked.size(),
                " entries, expected ", choices_.size());
    std::vector<Block> out(masked.size());
    for (std::size_t i = 0; i < masked.size(); ++i) {
      const Point ba = detail::scalar_mult(b_[i], a_);
      out[i] = masked[i][choices_[i] ? 1 : 0] ^ detail::ot_key(i, a_, bs_[i], ba);
    }
    return out;
  }

 private:
  Point a_{};
  std::vector<bool> choices_;
  std::vector<Scalar> b_;
  std::vector<Point> bs_;
};

}  // namespace hpi::nonpoly
