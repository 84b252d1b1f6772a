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
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hpi/error.hpp"
#include "hpi/rng.hpp"

namespace hpi {

/// Ring element: an integer modulo 2^modulus_bits, stored in the low bits.
using Word = std::uint64_t;

/// Power-of-two ring plus the fixed-point format of logical values.
struct RingParams {
  int modulus_bits = 64;
  int value_bits = 15;
  int frac_bits = 8;
  std::uint64_t max_reduction_dim = std::uint64_t{1} << 16;

  Word mask() const {
    return modulus_bits >= 64 ? ~Word{0} : (Word{1} << modulus_bits) - 1;
  }

  Word reduce(Word w) const { return w & mask(); }

  /// Two's-complement interpretation of a ring element.
  std::int64_t to_signed(Word w) const {
    w = reduce(w);
    if (modulus_bits >= 64) return static_cast<std::int64_t>(w);
    const Word sign = Word{1} << (modulus_bits - 1);
    return (w & sign) ? static_cast<std::int64_t>(w) - static_cast<std::int64_t>(Word{1} << modulus_bits)
                      : static_cast<std::int64_t>(w);
  }

  Word from_signed(std::int64_t v) const { return reduce(static_cast<Word>(v)); }

  std::int64_t value_max() const { return (std::int64_t{1} << (value_bits - 1)) - 1; }
  std::int64_t value_min() const { return -(std::int64_t{1} << (value_bits - 1)); }

  void validate() const {
    HPI_ENFORCE(modulus_bits >= 2 && modulus_bits <= 64, kInvalidArgument,
                "modulus_bits must be in [2, 64], got ", modulus_bits);
    HPI_ENFORCE(value_bits >= 2, kInvalidArgument, "value_bits too small");
    HPI_ENFORCE(frac_bits >= 0 && frac_bits < value_bits, kInvalidArgument,
                "frac_bits must be < value_bits");
    HPI_ENFORCE(max_reduction_dim >= 1, kInvalidArgument, "max_reduction_dim must be >= 1");
    const int log_red = static_cast<int>(std::bit_width(max_reduction_dim - 1));
    HPI_ENFORCE(modulus_bits >= 2 * value_bits + log_red, kInvalidArgument,
                "ring of ", modulus_bits, " bits lacks headroom for ", value_bits,
                "-bit values reduced over ", max_reduction_dim, " terms");
  }

  friend bool operator==(const RingParams&, const RingParams&) = default;
};

/// Dense row-major matrix of ring elements.
struct FixedTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Word> data;

  FixedTensor() = default;
  FixedTensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0) {}
  FixedTensor(std::size_t r, std::size_t c, std::vector<Word> d)
      : rows(r), cols(c), data(std::move(d)) {
    HPI_ENFORCE(data.size() == r * c, kShapeMismatch, "data length ", data.size(),
                " != ", r, "x", c);
  }

  Word& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  Word at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const FixedTensor& o) const { return rows == o.rows && cols == o.cols; }

  friend bool operator==(const FixedTensor&, const FixedTensor&) = default;
};

// ---------------------------------------------------------------------------
// Scalars

inline Word fx_encode(double x, const RingParams& p = {}) {
  const double bound = std::ldexp(1.0, p.value_bits - 1 - p.frac_bits);
  HPI_ENFORCE(std::isfinite(x) && std::fabs(x) < bound, kOverflow, "value ", x,
              " outside fixed-point range (|x| < ", bound, ")");
  return p.from_signed(std::llround(std::ldexp(x, p.frac_bits)));
}

inline double fx_decode(Word w, const RingParams& p = {}, int frac_bits = -1) {
  const int f = frac_bits < 0 ? p.frac_bits : frac_bits;
  return std::ldexp(static_cast<double>(p.to_signed(w)), -f);
}

// ---------------------------------------------------------------------------
// Elementwise ring arithmetic

inline FixedTensor add(const FixedTensor& a, const FixedTensor& b, const RingParams& p = {}) {
  HPI_ENFORCE(a.same_shape(b), kShapeMismatch, "add: ", a.rows, "x", a.cols, " vs ", b.rows,
              "x", b.cols);
  FixedTensor out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = p.reduce(a.data[i] + b.data[i]);
  return out;
}

inline FixedTensor sub(const FixedTensor& a, const FixedTensor& b, const RingParams& p = {}) {
  HPI_ENFORCE(a.same_shape(b), kShapeMismatch, "sub: ", a.rows, "x", a.cols, " vs ", b.rows,
              "x", b.cols);
  FixedTensor out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = p.reduce(a.data[i] - b.data[i]);
  return out;
}

inline FixedTensor neg(const FixedTensor& a, const RingParams& p = {}) {
  FixedTensor out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = p.reduce(Word{0} - a.data[i]);
  return out;
}

inline FixedTensor scale(const FixedTensor& a, Word k, const RingParams& p = {}) {
  FixedTensor out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = p.reduce(a.data[i] * k);
  return out;
}

/// Exact product in the ring. No truncation.
inline FixedTensor mat_mul(const FixedTensor& a, const FixedTensor& b, const RingParams& p = {}) {
  HPI_ENFORCE(a.cols == b.rows, kShapeMismatch, "mat_mul: ", a.rows, "x", a.cols, " * ",
              b.rows, "x", b.cols);
  FixedTensor out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    Word* orow = &out.data[i * b.cols];
    for (std::size_t k = 0; k < a.cols; ++k) {
      const Word av = a.data[i * a.cols + k];
      if (av == 0) continue;
      const Word* brow = &b.data[k * b.cols];
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
    }
  }
  if (p.modulus_bits < 64)
    for (auto& w : out.data) w = p.reduce(w);
  return out;
}

inline FixedTensor transpose(const FixedTensor& a) {
  FixedTensor out(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

inline FixedTensor identity(std::size_t n, Word diag = 1) {
  FixedTensor out(n, n);
  for (std::size_t i = 0; i < n; ++i) out.at(i, i) = diag;
  return out;
}

/// Columns [c0, c0 + width).
inline FixedTensor col_slice(const FixedTensor& a, std::size_t c0, std::size_t width) {
  HPI_ENFORCE(c0 + width <= a.cols, kShapeMismatch, "col_slice out of range");
  FixedTensor out(a.rows, width);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < width; ++j) out.at(i, j) = a.at(i, c0 + j);
  return out;
}

inline FixedTensor hconcat(std::span<const FixedTensor> parts) {
  HPI_ENFORCE(!parts.empty(), kInvalidArgument, "hconcat of nothing");
  std::size_t cols = 0;
  for (const auto& p : parts) {
    HPI_ENFORCE(p.rows == parts[0].rows, kShapeMismatch, "hconcat row mismatch");
    cols += p.cols;
  }
  FixedTensor out(parts[0].rows, cols);
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.rows; ++i)
      for (std::size_t j = 0; j < p.cols; ++j) out.at(i, c0 + j) = p.at(i, j);
    c0 += p.cols;
  }
  return out;
}

/// Floor shift by `shift` bits, then saturate to the signed value range.
/// Saturated elements are tallied into `*saturated` when given.
inline FixedTensor truncate(const FixedTensor& a, const RingParams& p = {}, int shift = -1,
                            std::size_t* saturated = nullptr) {
  const int s = shift < 0 ? p.frac_bits : shift;
  FixedTensor out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::int64_t v = p.to_signed(a.data[i]) >> s;
    if (v > p.value_max()) {
      v = p.value_max();
      if (saturated) ++*saturated;
    } else if (v < p.value_min()) {
      v = p.value_min();
      if (saturated) ++*saturated;
    }
    out.data[i] = p.from_signed(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Construction helpers

inline FixedTensor encode_matrix(std::size_t rows, std::size_t cols, std::span<const double> values,
                                 const RingParams& p = {}) {
  HPI_ENFORCE(values.size() == rows * cols, kShapeMismatch, "encode_matrix size");
  FixedTensor out(rows, cols);
  for (std::size_t i = 0; i < values.size(); ++i) out.data[i] = fx_encode(values[i], p);
  return out;
}

inline std::vector<double> decode_matrix(const FixedTensor& a, const RingParams& p = {},
                                         int frac_bits = -1) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = fx_decode(a.data[i], p, frac_bits);
  return out;
}

/// Uniform over the whole ring.
inline FixedTensor random_ring(std::size_t rows, std::size_t cols, CounterRng& rng,
                               const RingParams& p = {}) {
  FixedTensor out(rows, cols);
  for (auto& w : out.data) w = p.reduce(rng());
  return out;
}

/// Fixed-point encodings of reals drawn uniformly from [lo, hi).
inline FixedTensor random_fixed(std::size_t rows, std::size_t cols, CounterRng& rng, double lo,
                                double hi, const RingParams& p = {}) {
  FixedTensor out(rows, cols);
  for (auto& w : out.data) w = fx_encode(rng.uniform(lo, hi), p);
  return out;
}

}  // namespace hpi
