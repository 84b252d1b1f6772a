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
#include <cstddef>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hpi/error.hpp"
#include "hpi/he.hpp"
#include "hpi/numeric.hpp"

namespace hpi::packing {

enum class Strategy : std::uint8_t { kFeaturesFirst = 0, kTokensFirst = 1 };

inline const char* strategy_name(Strategy s) {
  return s == Strategy::kFeaturesFirst ? "features_first" : "tokens_first";
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "features_first") return Strategy::kFeaturesFirst;
  if (s == "tokens_first") return Strategy::kTokensFirst;
  ::hpi::detail::throw_error(ErrorCode::kConfig, "unknown packing strategy '", s, "'");
}

enum class Kernel : std::uint8_t {
  // One rotation per candidate offset; the accounting baseline.
  kNaive,
  // Rotate-and-add with halving strides; tokens-first only.
  kLogStep,
};

struct SlotRef {
  std::size_t ct = 0;
  std::size_t slot = 0;
};

/// Placement of an n x d matrix (n tokens, d features) into ciphertexts of
/// M slots. Features-first keeps each token's features contiguous;
/// tokens-first keeps each feature's n token values contiguous. Both fill
/// slots densely, so c = ceil(n*d / M).
struct PackingLayout {
  Strategy strategy = Strategy::kFeaturesFirst;
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t M = 0;
  std::size_t c = 0;
  // Naive-kernel rotation count: c*M features-first, c*ceil(M/n) tokens-first.
  std::size_t predicted_rotations = 0;

  std::size_t linear_index(std::size_t t, std::size_t j) const {
    return strategy == Strategy::kFeaturesFirst ? t * d + j : j * n + t;
  }

  SlotRef locate(std::size_t t, std::size_t j) const {
    const std::size_t idx = linear_index(t, j);
    return {idx / M, idx % M};
  }

  /// Inverse map; nullopt for padding slots.
  std::optional<std::pair<std::size_t, std::size_t>> entry(std::size_t ct,
                                                           std::size_t slot) const {
    const std::size_t idx = ct * M + slot;
    if (idx >= n * d) return std::nullopt;
    if (strategy == Strategy::kFeaturesFirst) return std::pair{idx / d, idx % d};
    return std::pair{idx % n, idx / n};
  }

  std::size_t used_slots(std::size_t ct) const {
    const std::size_t begin = ct * M;
    const std::size_t total = n * d;
    return begin >= total ? 0 : std::min(M, total - begin);
  }

  friend bool operator==(const PackingLayout&, const PackingLayout&) = default;
};

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

inline PackingLayout make_layout(Strategy s, std::size_t n, std::size_t d, std::size_t M) {
  HPI_ENFORCE(n >= 1 && d >= 1, kShapeMismatch, "empty matrix ", n, "x", d);
  HPI_ENFORCE(M >= 1 && std::has_single_bit(M), kInvalidArgument, "slot count ", M,
              " is not a power of two");
  PackingLayout l{s, n, d, M, ceil_div(n * d, M), 0};
  l.predicted_rotations =
      s == Strategy::kFeaturesFirst ? l.c * M : l.c * ceil_div(M, std::min(n, M));
  return l;
}

/// Picks tokens-first when its predicted rotation count is strictly lower.
inline PackingLayout plan_layout(std::size_t n, std::size_t d, std::size_t M) {
  HPI_ENFORCE(n <= M, kUnsupported, "n = ", n, " tokens exceeds M = ", M, " slots");
  const auto ff = make_layout(Strategy::kFeaturesFirst, n, d, M);
  const auto tf = make_layout(Strategy::kTokensFirst, n, d, M);
  return tf.predicted_rotations < ff.predicted_rotations ? tf : ff;
}

/// key = value lines, the same syntax as run configs.
inline std::string layout_to_config(const PackingLayout& l) {
  std::ostringstream os;
  os << "packing.strategy = " << strategy_name(l.strategy) << "\n"
     << "packing.n = " << l.n << "\n"
     << "packing.d = " << l.d << "\n"
     << "packing.slots = " << l.M << "\n"
     << "packing.ciphertexts = " << l.c << "\n"
     << "packing.predicted_rotations = " << l.predicted_rotations << "\n";
  return os.str();
}

inline PackingLayout layout_from_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto need = [&](const char* k) {
    auto it = kv.find(k);
    HPI_ENFORCE(it != kv.end(), kConfig, "layout descriptor missing '", k, "'");
    return it->second;
  };
  return make_layout(parse_strategy(need("packing.strategy")), std::stoull(need("packing.n")),
                     std::stoull(need("packing.d")), std::stoull(need("packing.slots")));
}

// ---------------------------------------------------------------------------
// Packed matrices

struct EncMatrix {
  PackingLayout layout;
  std::vector<he::Ciphertext> cts;

  std::size_t rows() const { return layout.n; }
  std::size_t cols() const { return layout.d; }
};

inline std::vector<std::vector<Word>> pack_plain(const FixedTensor& x, const PackingLayout& l) {
  HPI_ENFORCE(x.rows == l.n && x.cols == l.d, kShapeMismatch, "matrix ", x.rows, "x", x.cols,
              " does not match layout ", l.n, "x", l.d);
  std::vector<std::vector<Word>> slots(l.c, std::vector<Word>(l.M, 0));
  for (std::size_t t = 0; t < l.n; ++t)
    for (std::size_t j = 0; j < l.d; ++j) {
      const auto r = l.locate(t, j);
      slots[r.ct][r.slot] = x.at(t, j);
    }
  return slots;
}

inline FixedTensor unpack_plain(const std::vector<std::vector<Word>>& slots,
                                const PackingLayout& l) {
  HPI_ENFORCE(slots.size() == l.c, kShapeMismatch, "expected ", l.c, " slot vectors, got ",
              slots.size());
  FixedTensor x(l.n, l.d);
  for (std::size_t t = 0; t < l.n; ++t)
    for (std::size_t j = 0; j < l.d; ++j) {
      const auto r = l.locate(t, j);
      x.at(t, j) = slots[r.ct][r.slot];
    }
  return x;
}

inline EncMatrix pack(const he::Evaluator& ev, const FixedTensor& x, const PackingLayout& l,
                      const he::PublicKey& pk) {
  HPI_ENFORCE(l.M == ev.slots(), kShapeMismatch, "layout has ", l.M, " slots, backend ",
              ev.slots());
  EncMatrix out{l, {}};
  for (const auto& s : pack_plain(x, l)) out.cts.push_back(ev.encrypt(s, pk));
  return out;
}

inline FixedTensor unpack(const he::Evaluator& ev, const EncMatrix& m, const he::SecretKey& sk) {
  std::vector<std::vector<Word>> slots;
  slots.reserve(m.cts.size());
  for (const auto& c : m.cts) slots.push_back(ev.decrypt(c, sk));
  return unpack_plain(slots, m.layout);
}

inline EncMatrix add_plain(const he::Evaluator& ev, const EncMatrix& m, const FixedTensor& p) {
  const auto slots = pack_plain(p, m.layout);
  EncMatrix out{m.layout, {}};
  for (std::size_t k = 0; k < m.cts.size(); ++k) out.cts.push_back(ev.add_plain(m.cts[k], slots[k]));
  return out;
}

inline EncMatrix add(const he::Evaluator& ev, const EncMatrix& a, const EncMatrix& b) {
  HPI_ENFORCE(a.layout == b.layout, kShapeMismatch, "packed operands have different layouts");
  EncMatrix out{a.layout, {}};
  for (std::size_t k = 0; k < a.cts.size(); ++k) out.cts.push_back(ev.add(a.cts[k], b.cts[k]));
  return out;
}

// ---------------------------------------------------------------------------
// Plaintext-weight products on packed matrices

enum class Contraction : std::uint8_t {
  kRight,           // X * W
  kLeft,            // U * X
  kLeftTransposed,  // U * X^T
};

enum class RotationPolicy : std::uint8_t {
  kAllOffsets,  // every offset 0..M-1 per input ciphertext
  kNeeded,      // only offsets that pair some input slot with an output slot
};

namespace detail {

struct Term {
  std::size_t out_ct;
  std::size_t out_slot;
  Word coeff;
};

/// Generic rotate/multiply/accumulate kernel. For each rotation offset r
/// and output slot s, the rotated input slot (s + r) mod M contributes
/// when its (row, col) pairs with the output entry under `kind`.
inline EncMatrix contract(const he::Evaluator& ev, const EncMatrix& in, const FixedTensor& w,
                          Contraction kind, RotationPolicy policy) {
  const auto& il = in.layout;
  std::size_t out_rows = 0, out_cols = 0;
  switch (kind) {
    case Contraction::kRight:
      HPI_ENFORCE(w.rows == il.d, kShapeMismatch, "X(", il.n, "x", il.d, ") * W(", w.rows, "x",
                  w.cols, ")");
      out_rows = il.n;
      out_cols = w.cols;
      break;
    case Contraction::kLeft:
      HPI_ENFORCE(w.cols == il.n, kShapeMismatch, "U(", w.rows, "x", w.cols, ") * X(", il.n, "x",
                  il.d, ")");
      out_rows = w.rows;
      out_cols = il.d;
      break;
    case Contraction::kLeftTransposed:
      HPI_ENFORCE(w.cols == il.d, kShapeMismatch, "U(", w.rows, "x", w.cols, ") * X^T(", il.d,
                  "x", il.n, ")");
      out_rows = w.rows;
      out_cols = il.n;
      break;
  }
  const auto ol = make_layout(il.strategy, out_rows, out_cols, il.M);
  const std::size_t M = il.M;

  auto key_in = [&](std::size_t a, std::size_t b) {
    return kind == Contraction::kLeft ? b : a;
  };
  auto key_out = [&](std::size_t i, std::size_t j) {
    return kind == Contraction::kRight ? i : j;
  };
  auto coeff = [&](std::size_t i, std::size_t j, std::size_t a, std::size_t b) -> Word {
    switch (kind) {
      case Contraction::kRight: return w.at(b, j);
      case Contraction::kLeft: return w.at(i, a);
      case Contraction::kLeftTransposed: return w.at(i, b);
    }
    return 0;
  };

  std::vector<std::optional<he::Ciphertext>> acc(ol.c);
  for (std::size_t k = 0; k < in.cts.size(); ++k) {
    std::unordered_map<std::size_t, std::vector<std::pair<std::size_t, std::pair<std::size_t, std::size_t>>>>
        buckets;
    for (std::size_t s = 0; s < il.used_slots(k); ++s) {
      const auto e = *il.entry(k, s);
      buckets[key_in(e.first, e.second)].push_back({s, e});
    }
    std::vector<std::vector<Term>> terms(M);
    for (std::size_t q = 0; q < ol.c; ++q)
      for (std::size_t s = 0; s < ol.used_slots(q); ++s) {
        const auto [i, j] = *ol.entry(q, s);
        auto it = buckets.find(key_out(i, j));
        if (it == buckets.end()) continue;
        for (const auto& [in_slot, ab] : it->second) {
          const std::size_t r = (in_slot + M - s) % M;
          terms[r].push_back({q, s, coeff(i, j, ab.first, ab.second)});
        }
      }
    for (std::size_t r = 0; r < M; ++r) {
      if (policy == RotationPolicy::kNeeded && terms[r].empty()) continue;
      const auto rotated = ev.rotate(in.cts[k], r);
      if (terms[r].empty()) continue;
      std::map<std::size_t, std::vector<Word>> plains;
      for (const auto& t : terms[r]) {
        auto& p = plains[t.out_ct];
        if (p.empty()) p.assign(M, 0);
        p[t.out_slot] = t.coeff;
      }
      for (auto& [q, p] : plains) {
        auto prod = ev.mul_plain(rotated, p);
        acc[q] = acc[q] ? ev.add(*acc[q], prod) : std::move(prod);
      }
    }
  }
  EncMatrix out{ol, {}};
  for (auto& a : acc) {
    HPI_ENFORCE(a.has_value(), kInternal, "output ciphertext received no terms");
    out.cts.push_back(std::move(*a));
  }
  return out;
}

inline EncMatrix matmul_log_step(const he::Evaluator& ev, const EncMatrix& in,
                                 const FixedTensor& w) {
  const auto& il = in.layout;
  const std::size_t M = il.M, n = il.n;
  HPI_ENFORCE(il.strategy == Strategy::kTokensFirst, kUnsupported,
              "log-step kernel requires tokens-first packing");
  HPI_ENFORCE(M % n == 0 && std::has_single_bit(M / n), kUnsupported,
              "log-step kernel requires M/n to be a power of two (n=", n, ", M=", M, ")");
  HPI_ENFORCE(w.rows == il.d, kShapeMismatch, "X(", il.n, "x", il.d, ") * W(", w.rows, "x",
              w.cols, ")");
  const auto ol = make_layout(Strategy::kTokensFirst, n, w.cols, M);

  // Per output column: every slot congruent to t (mod n) ends up holding
  // the partial dot product of token t.
  std::vector<std::optional<he::Ciphertext>> col_acc(w.cols);
  for (std::size_t k = 0; k < in.cts.size(); ++k) {
    for (std::size_t o = 0; o < w.cols; ++o) {
      std::vector<Word> p(M, 0);
      for (std::size_t s = 0; s < il.used_slots(k); ++s) p[s] = w.at(il.entry(k, s)->second, o);
      auto prod = ev.mul_plain(in.cts[k], p);
      for (std::size_t stride = n; stride < M; stride *= 2)
        prod = ev.add(prod, ev.rotate(prod, stride));
      col_acc[o] = col_acc[o] ? ev.add(*col_acc[o], prod) : std::move(prod);
    }
  }
  std::vector<std::optional<he::Ciphertext>> acc(ol.c);
  for (std::size_t q = 0; q < ol.c; ++q) {
    std::map<std::size_t, std::vector<Word>> selectors;
    for (std::size_t s = 0; s < ol.used_slots(q); ++s) {
      auto& sel = selectors[ol.entry(q, s)->second];
      if (sel.empty()) sel.assign(M, 0);
      sel[s] = 1;
    }
    for (auto& [o, sel] : selectors) {
      auto term = ev.mul_plain(*col_acc[o], sel);
      acc[q] = acc[q] ? ev.add(*acc[q], term) : std::move(term);
    }
  }
  EncMatrix out{ol, {}};
  for (auto& a : acc) out.cts.push_back(std::move(*a));
  return out;
}

}  // namespace detail

/// Enc(X) * W for plaintext W. The naive kernel uses every offset under
/// features-first packing and only the needed offsets under tokens-first.
inline EncMatrix he_matmul(const he::Evaluator& ev, const EncMatrix& x, const FixedTensor& w,
                           Kernel kernel = Kernel::kNaive) {
  if (kernel == Kernel::kLogStep) return detail::matmul_log_step(ev, x, w);
  const auto policy = x.layout.strategy == Strategy::kFeaturesFirst ? RotationPolicy::kAllOffsets
                                                                    : RotationPolicy::kNeeded;
  return detail::contract(ev, x, w, Contraction::kRight, policy);
}

/// U * Enc(X).
inline EncMatrix he_left_matmul(const he::Evaluator& ev, const FixedTensor& u, const EncMatrix& x) {
  return detail::contract(ev, x, u, Contraction::kLeft, RotationPolicy::kNeeded);
}

/// U * Enc(X)^T.
inline EncMatrix he_left_matmul_t(const he::Evaluator& ev, const FixedTensor& u,
                                  const EncMatrix& x) {
  return detail::contract(ev, x, u, Contraction::kLeftTransposed, RotationPolicy::kNeeded);
}

}  // namespace hpi::packing
