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
#include <atomic>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <mutex>
#include <ostream>
#include <set>
#include <string>
#include <utility>

#include "hpi/error.hpp"
#include "hpi/he.hpp"
#include "hpi/numeric.hpp"
#include "hpi/packing.hpp"
#include "hpi/rng.hpp"

namespace hpi::sharing {

enum class Party : std::uint8_t { kClient = 0, kServer = 1 };

inline const char* party_name(Party p) { return p == Party::kClient ? "client" : "server"; }

/// One party's additive share of a logical tensor.
struct ShareMat {
  Party owner = Party::kClient;
  FixedTensor value;
  std::string of;
};

/// Client receives the uniform mask r, server receives x - r.
inline std::pair<ShareMat, ShareMat> share(const FixedTensor& x, CounterRng& rng,
                                           const RingParams& p = {}, std::string of = {}) {
  FixedTensor r = random_ring(x.rows, x.cols, rng, p);
  ShareMat server{Party::kServer, sub(x, r, p), of};
  return {ShareMat{Party::kClient, std::move(r), of}, std::move(server)};
}

inline FixedTensor reconstruct(const ShareMat& a, const ShareMat& b, const RingParams& p = {}) {
  HPI_ENFORCE(a.owner != b.owner, kInvalidArgument, "both shares held by ",
              party_name(a.owner));
  return add(a.value, b.value, p);
}

/// Scales a share by a public constant. Needs no communication.
inline ShareMat local_scalar_mul(const ShareMat& s, Word k, const RingParams& p = {}) {
  return ShareMat{s.owner, scale(s.value, k, p), s.of};
}

inline ShareMat local_add(const ShareMat& a, const ShareMat& b, const RingParams& p = {}) {
  HPI_ENFORCE(a.owner == b.owner, kInvalidArgument, "adding shares of different parties");
  return ShareMat{a.owner, add(a.value, b.value, p), a.of};
}

// ---------------------------------------------------------------------------
// Matrix triples

inline std::atomic<std::uint64_t>& triple_counter() {
  static std::atomic<std::uint64_t> c{1};
  return c;
}

/// Correlated material for one masked product X * Y with X (m x k) and
/// Y (k x p). The client keeps the plaintext masks; the server receives the
/// three ciphertexts and samples its own re-sharing mask rs_next.
///
/// Field correspondence for the Gram form (left = Rc^T, right = Rc):
/// enc_left = Enc(Rc^T), enc_right = Enc(Rc), enc_product = Enc(Rc^T * Rc).
struct MatTriple {
  std::uint64_t id = 0;
  FixedTensor left;   // client
  FixedTensor right;  // client
  packing::EncMatrix enc_left;
  packing::EncMatrix enc_right;
  packing::EncMatrix enc_product;
  FixedTensor rs_next;  // server
};

/// Builds a triple from given masks. The client multiplies its own masks in
/// the clear, so no ciphertext-ciphertext product is needed.
inline MatTriple gen_triple_from(const he::Evaluator& ev, const he::PublicKey& pk,
                                 FixedTensor left, FixedTensor right, packing::Strategy strategy,
                                 CounterRng& server_rng) {
  HPI_ENFORCE(left.cols == right.rows, kShapeMismatch, "triple masks ", left.rows, "x",
              left.cols, " and ", right.rows, "x", right.cols, " do not chain");
  const auto& ring = ev.params().ring;
  const std::size_t M = ev.slots();
  MatTriple t;
  t.id = triple_counter().fetch_add(1);
  const FixedTensor product = mat_mul(left, right, ring);
  t.enc_left = packing::pack(ev, left, packing::make_layout(strategy, left.rows, left.cols, M), pk);
  t.enc_right =
      packing::pack(ev, right, packing::make_layout(strategy, right.rows, right.cols, M), pk);
  t.enc_product = packing::pack(
      ev, product, packing::make_layout(strategy, product.rows, product.cols, M), pk);
  t.rs_next = random_ring(left.rows, right.cols, server_rng, ring);
  t.left = std::move(left);
  t.right = std::move(right);
  return t;
}

/// Fresh uniform masks for an (m x k) * (k x p) product.
inline MatTriple gen_triple(const he::Evaluator& ev, const he::PublicKey& pk, std::size_t m,
                            std::size_t k, std::size_t p, packing::Strategy strategy,
                            CounterRng& client_rng, CounterRng& server_rng) {
  const auto& ring = ev.params().ring;
  FixedTensor l = random_ring(m, k, client_rng, ring);
  FixedTensor r = random_ring(k, p, client_rng, ring);
  return gen_triple_from(ev, pk, std::move(l), std::move(r), strategy, server_rng);
}

/// Gram form for a single mask Rc: material for Rc^T * Rc.
inline MatTriple gen_gram_triple(const he::Evaluator& ev, const he::PublicKey& pk,
                                 const FixedTensor& rc, packing::Strategy strategy,
                                 CounterRng& server_rng) {
  return gen_triple_from(ev, pk, transpose(rc), rc, strategy, server_rng);
}

/// Rejects a second use of any triple id.
class TripleRegistry {
 public:
  void consume(std::uint64_t id) {
    std::lock_guard lock(mu_);
    HPI_ENFORCE(used_.insert(id).second, kTripleReuse, "triple ", id, " already consumed");
  }
  bool used(std::uint64_t id) const {
    std::lock_guard lock(mu_);
    return used_.contains(id);
  }

 private:
  mutable std::mutex mu_;
  std::set<std::uint64_t> used_;
};

// ---------------------------------------------------------------------------
// Offline-material file: little-endian, "PRM1" magic.

inline constexpr std::array<char, 4> kTripleMagic = {'P', 'R', 'M', '1'};
inline constexpr std::uint32_t kTripleVersion = 1;

namespace io {

static_assert(std::endian::native == std::endian::little, "little-endian host assumed");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  HPI_ENFORCE(is.good(), kSchema, "truncated offline-material file");
  return v;
}

inline void put_tensor(std::ostream& os, const FixedTensor& t) {
  put<std::uint64_t>(os, t.rows);
  put<std::uint64_t>(os, t.cols);
  os.write(reinterpret_cast<const char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(Word)));
}

inline FixedTensor get_tensor(std::istream& is) {
  const auto rows = get<std::uint64_t>(is);
  const auto cols = get<std::uint64_t>(is);
  HPI_ENFORCE(rows < (1u << 24) && cols < (1u << 24), kSchema, "implausible tensor shape");
  FixedTensor t(rows, cols);
  is.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(Word)));
  HPI_ENFORCE(is.good(), kSchema, "truncated tensor payload");
  return t;
}

inline void put_enc(std::ostream& os, const packing::EncMatrix& m) {
  put<std::uint8_t>(os, static_cast<std::uint8_t>(m.layout.strategy));
  put<std::uint64_t>(os, m.layout.n);
  put<std::uint64_t>(os, m.layout.d);
  put<std::uint64_t>(os, m.layout.M);
  put<std::uint64_t>(os, m.cts.size());
  for (const auto& c : m.cts) {
    put<std::uint64_t>(os, c.key_id());
    put<std::uint64_t>(os, c.nonce());
    put<std::int64_t>(os, c.noise_used());
    put<std::uint8_t>(os, static_cast<std::uint8_t>(c.phase()));
    const auto payload = c.wire_payload();
    put<std::uint64_t>(os, payload.size());
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size() * sizeof(Word)));
  }
}

inline packing::EncMatrix get_enc(std::istream& is, const he::PublicKey& pk) {
  const auto strategy = get<std::uint8_t>(is);
  HPI_ENFORCE(strategy <= 1, kSchema, "unknown layout id ", int(strategy));
  const auto n = get<std::uint64_t>(is);
  const auto d = get<std::uint64_t>(is);
  const auto M = get<std::uint64_t>(is);
  packing::EncMatrix m{packing::make_layout(static_cast<packing::Strategy>(strategy), n, d, M), {}};
  const auto count = get<std::uint64_t>(is);
  HPI_ENFORCE(count == m.layout.c, kSchema, "ciphertext count ", count, " != layout ",
              m.layout.c);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto key_id = get<std::uint64_t>(is);
    HPI_ENFORCE(key_id == pk.key_id, kWrongKey, "material under key ", key_id,
                " loaded with key ", pk.key_id);
    const auto nonce = get<std::uint64_t>(is);
    const auto noise = get<std::int64_t>(is);
    const auto phase = get<std::uint8_t>(is);
    const auto slots = get<std::uint64_t>(is);
    HPI_ENFORCE(slots == M, kSchema, "ciphertext slot count mismatch");
    std::vector<Word> payload(slots);
    is.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(slots * sizeof(Word)));
    HPI_ENFORCE(is.good(), kSchema, "truncated ciphertext payload");
    m.cts.push_back(he::CiphertextCodec::make(std::move(payload), nonce, noise,
                                              static_cast<Phase>(phase), pk));
  }
  return m;
}

}  // namespace io

inline void write_triple(std::ostream& os, const MatTriple& t, const RingParams& ring) {
  os.write(kTripleMagic.data(), 4);
  io::put<std::uint32_t>(os, kTripleVersion);
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(ring.modulus_bits));
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(ring.value_bits));
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(ring.frac_bits));
  io::put<std::uint64_t>(os, t.id);
  io::put<std::uint64_t>(os, t.left.rows);
  io::put<std::uint64_t>(os, t.left.cols);
  io::put<std::uint64_t>(os, t.right.cols);
  io::put<std::uint8_t>(os, static_cast<std::uint8_t>(t.enc_left.layout.strategy));
  io::put_tensor(os, t.left);
  io::put_tensor(os, t.right);
  io::put_tensor(os, t.rs_next);
  io::put_enc(os, t.enc_left);
  io::put_enc(os, t.enc_right);
  io::put_enc(os, t.enc_product);
}

inline MatTriple read_triple(std::istream& is, const he::PublicKey& pk, RingParams* ring_out = nullptr) {
  std::array<char, 4> magic{};
  is.read(magic.data(), 4);
  HPI_ENFORCE(is.good() && magic == kTripleMagic, kSchema, "not an offline-material file");
  const auto version = io::get<std::uint32_t>(is);
  HPI_ENFORCE(version == kTripleVersion, kSchema, "unsupported version ", version);
  RingParams ring;
  ring.modulus_bits = static_cast<int>(io::get<std::uint32_t>(is));
  ring.value_bits = static_cast<int>(io::get<std::uint32_t>(is));
  ring.frac_bits = static_cast<int>(io::get<std::uint32_t>(is));
  MatTriple t;
  t.id = io::get<std::uint64_t>(is);
  const auto m = io::get<std::uint64_t>(is);
  const auto k = io::get<std::uint64_t>(is);
  const auto p = io::get<std::uint64_t>(is);
  const auto layout_id = io::get<std::uint8_t>(is);
  t.left = io::get_tensor(is);
  t.right = io::get_tensor(is);
  t.rs_next = io::get_tensor(is);
  HPI_ENFORCE(t.left.rows == m && t.left.cols == k && t.right.rows == k && t.right.cols == p &&
                  t.rs_next.rows == m && t.rs_next.cols == p,
              kSchema, "triple tensors disagree with header shape");
  t.enc_left = io::get_enc(is, pk);
  t.enc_right = io::get_enc(is, pk);
  t.enc_product = io::get_enc(is, pk);
  HPI_ENFORCE(static_cast<std::uint8_t>(t.enc_left.layout.strategy) == layout_id, kSchema,
              "layout id mismatch");
  if (ring_out) *ring_out = ring;
  return t;
}

}  // namespace hpi::sharing
