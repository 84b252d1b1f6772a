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

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "hpi/cost.hpp"
#include "hpi/error.hpp"
#include "hpi/numeric.hpp"
#include "hpi/rng.hpp"

namespace hpi::he {

/// Linear noise meter. Every homomorphic op consumes a fixed amount; a
/// ciphertext whose consumption exceeds `budget` can no longer be used.
struct NoiseModel {
  std::int64_t budget = std::int64_t{1} << 24;
  std::int64_t per_add = 1;
  std::int64_t per_mul_plain = 16;
  std::int64_t per_rotate = 4;
};

struct HeParams {
  std::size_t slots = 4096;
  RingParams ring{};
  std::size_t ciphertext_bytes = std::size_t{1} << 18;
  NoiseModel noise{};

  void validate() const {
    HPI_ENFORCE(slots >= 1 && std::has_single_bit(slots), kInvalidArgument,
                "slot count must be a power of two, got ", slots);
    HPI_ENFORCE(ciphertext_bytes > 0, kInvalidArgument, "ciphertext_bytes must be positive");
    HPI_ENFORCE(noise.budget > 0 && noise.per_add > 0 && noise.per_mul_plain > 0 &&
                    noise.per_rotate > 0,
                kInvalidArgument, "noise model fields must be positive");
    ring.validate();
  }
};

namespace detail {

struct KeyMaterial {
  std::uint64_t key_id;
  std::uint64_t pad_seed;
};

inline std::atomic<std::uint64_t>& key_counter() {
  static std::atomic<std::uint64_t> c{1};
  return c;
}

inline std::atomic<std::uint64_t>& nonce_counter() {
  static std::atomic<std::uint64_t> c{1};
  return c;
}

inline Word pad_word(const KeyMaterial& km, std::uint64_t nonce, std::size_t i) {
  return mix64(km.pad_seed ^ mix64(nonce * 0x9e3779b97f4a7c15ULL + i));
}

}  // namespace detail

struct PublicKey {
  std::uint64_t key_id = 0;
  std::shared_ptr<const detail::KeyMaterial> material;
};

struct SecretKey {
  std::uint64_t key_id = 0;
  std::shared_ptr<const detail::KeyMaterial> material;
};

struct KeyPair {
  PublicKey pub;
  SecretKey sec;
  std::uint64_t key_id() const { return pub.key_id; }
};

/// An encrypted slot vector. The stored payload is one-time-padded under a
/// per-key stream, so reading it without the secret key yields noise.
class Ciphertext {
 public:
  Ciphertext() = default;

  std::uint64_t key_id() const { return material_ ? material_->key_id : 0; }
  std::size_t slots() const { return payload_.size(); }
  std::int64_t noise_used() const { return noise_used_; }
  Phase phase() const { return phase_; }
  std::uint64_t nonce() const { return nonce_; }
  /// Padded payload as seen on the wire.
  std::span<const Word> wire_payload() const { return payload_; }

 private:
  friend class Evaluator;
  friend struct CiphertextCodec;

  std::vector<Word> payload_;
  std::uint64_t nonce_ = 0;
  std::shared_ptr<const detail::KeyMaterial> material_;
  std::int64_t noise_used_ = 0;
  Phase phase_ = Phase::kOffline;
};

/// Raw access used only by serialization; rebinds ciphertexts to a key.
struct CiphertextCodec {
  static Ciphertext make(std::vector<Word> payload, std::uint64_t nonce, std::int64_t noise,
                         Phase phase, const PublicKey& pk) {
    Ciphertext c;
    c.payload_ = std::move(payload);
    c.nonce_ = nonce;
    c.noise_used_ = noise;
    c.phase_ = phase;
    c.material_ = pk.material;
    return c;
  }
};

/// Additive HE evaluator with SIMD slots and rotations. There is no
/// ciphertext-ciphertext multiplication.
///
/// Functionally exact semantic backend: evaluation strips the pad
/// internally, computes on the slot vector and re-pads under a fresh nonce.
/// Every public operation records exactly one ledger entry.
class Evaluator {
 public:
  explicit Evaluator(HeParams params, CostLedger* ledger = nullptr)
      : params_(std::move(params)), ledger_(ledger) {
    params_.validate();
  }

  const HeParams& params() const { return params_; }
  std::size_t slots() const { return params_.slots; }
  CostLedger* ledger() const { return ledger_; }

  KeyPair keygen() const {
    const std::uint64_t id = detail::key_counter().fetch_add(1);
    auto km = std::make_shared<const detail::KeyMaterial>(
        detail::KeyMaterial{id, mix64(id ^ 0xa0761d6478bd642fULL)});
    return KeyPair{PublicKey{id, km}, SecretKey{id, km}};
  }

  Ciphertext encrypt(std::span<const Word> values, const PublicKey& pk) const {
    HPI_ENFORCE(pk.material != nullptr, kWrongKey, "encrypt with empty public key");
    HPI_ENFORCE(values.size() <= slots(), kOversize, "vector of ", values.size(),
                " exceeds ", slots(), " slots");
    std::vector<Word> v(slots(), 0);
    for (std::size_t i = 0; i < values.size(); ++i) v[i] = params_.ring.reduce(values[i]);
    record(HeOp::kEncrypt);
    return seal(std::move(v), pk.material, 0);
  }

  std::vector<Word> decrypt(const Ciphertext& c, const SecretKey& sk) const {
    HPI_ENFORCE(sk.material != nullptr && c.material_ != nullptr && sk.key_id == c.key_id(),
                kWrongKey, "ciphertext under key ", c.key_id(), " cannot be opened with key ",
                sk.key_id);
    record(HeOp::kDecrypt);
    return open(c);
  }

  Ciphertext add(const Ciphertext& a, const Ciphertext& b) const {
    check_pair(a, b);
    auto va = open(a);
    const auto vb = open(b);
    for (std::size_t i = 0; i < va.size(); ++i) va[i] = params_.ring.reduce(va[i] + vb[i]);
    record(HeOp::kAdd);
    return seal(std::move(va), a.material_,
                std::max(a.noise_used_, b.noise_used_) + params_.noise.per_add);
  }

  Ciphertext add_plain(const Ciphertext& a, std::span<const Word> plain) const {
    check_plain(a, plain);
    auto va = open(a);
    for (std::size_t i = 0; i < plain.size(); ++i) va[i] = params_.ring.reduce(va[i] + plain[i]);
    record(HeOp::kAddPlain);
    return seal(std::move(va), a.material_, a.noise_used_ + params_.noise.per_add);
  }

  Ciphertext mul_plain(const Ciphertext& a, std::span<const Word> plain) const {
    check_plain(a, plain);
    auto va = open(a);
    for (std::size_t i = 0; i < va.size(); ++i)
      va[i] = i < plain.size() ? params_.ring.reduce(va[i] * plain[i]) : 0;
    record(HeOp::kMulPlain);
    return seal(std::move(va), a.material_, a.noise_used_ + params_.noise.per_mul_plain);
  }

  /// Cyclic left rotation by k slots. k = 0 is still counted.
  Ciphertext rotate(const Ciphertext& a, std::size_t k) const {
    HPI_ENFORCE(a.material_ != nullptr, kInvalidArgument, "rotate of empty ciphertext");
    HPI_ENFORCE(k < slots(), kOutOfRange, "rotation ", k, " not in [0, ", slots(), ")");
    auto va = open(a);
    std::rotate(va.begin(), va.begin() + static_cast<std::ptrdiff_t>(k), va.end());
    record(HeOp::kRotate);
    return seal(std::move(va), a.material_, a.noise_used_ + params_.noise.per_rotate);
  }

 private:
  void record(HeOp op) const {
    if (ledger_) ledger_->record(op);
  }

  Phase current_phase() const { return ledger_ ? ledger_->phase() : Phase::kOffline; }

  void check_pair(const Ciphertext& a, const Ciphertext& b) const {
    HPI_ENFORCE(a.material_ && b.material_, kInvalidArgument, "empty ciphertext");
    HPI_ENFORCE(a.key_id() == b.key_id(), kKeyMismatch, "operands under keys ", a.key_id(),
                " and ", b.key_id());
    HPI_ENFORCE(a.slots() == b.slots(), kShapeMismatch, "slot counts differ");
  }

  void check_plain(const Ciphertext& a, std::span<const Word> plain) const {
    HPI_ENFORCE(a.material_ != nullptr, kInvalidArgument, "empty ciphertext");
    HPI_ENFORCE(plain.size() <= a.slots(), kShapeMismatch, "plaintext of ", plain.size(),
                " exceeds ", a.slots(), " slots");
  }

  std::vector<Word> open(const Ciphertext& c) const {
    std::vector<Word> v(c.payload_.size());
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] = params_.ring.reduce(c.payload_[i] - detail::pad_word(*c.material_, c.nonce_, i));
    return v;
  }

  Ciphertext seal(std::vector<Word> v, std::shared_ptr<const detail::KeyMaterial> km,
                  std::int64_t noise) const {
    HPI_ENFORCE(noise <= params_.noise.budget, kNoiseBudget, "noise ", noise,
                " exceeds budget ", params_.noise.budget);
    Ciphertext c;
    c.nonce_ = detail::nonce_counter().fetch_add(1);
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] = params_.ring.reduce(v[i] + detail::pad_word(*km, c.nonce_, i));
    c.payload_ = std::move(v);
    c.material_ = std::move(km);
    c.noise_used_ = noise;
    c.phase_ = current_phase();
    return c;
  }

  HeParams params_;
  CostLedger* ledger_;
};

}  // namespace hpi::he
