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
#include <cstdint>
#include <iterator>
#include <span>
#include <vector>

#include "hpi/error.hpp"

// Two's complement integers as LSB-first bit vectors, generic over a bit
// context. With a bool context these compute values directly; with a
// circuit builder the same code emits gates. Every nonlinear function is
// written once on top of these.
//
// A context provides:
//   using Bit = ...;
//   Bit constant(bool);
//   Bit xor_(Bit, Bit);
//   Bit and_(Bit, Bit);
//   Bit not_(Bit);
//   bool is_zero(Bit);  // true only for a known constant zero

namespace hpi::nonpoly {

template <class Ctx>
using Bits = std::vector<typename Ctx::Bit>;

template <class Ctx>
Bits<Ctx> constant(Ctx& ctx, std::int64_t v, int width) {
  Bits<Ctx> out;
  out.reserve(static_cast<std::size_t>(width));
  for (int i = 0; i < width; ++i)
    out.push_back(ctx.constant(i < 64 ? ((static_cast<std::uint64_t>(v) >> i) & 1) != 0 : v < 0));
  return out;
}

template <class Ctx>
typename Ctx::Bit bit_or(Ctx& ctx, typename Ctx::Bit a, typename Ctx::Bit b) {
  return ctx.xor_(ctx.xor_(a, b), ctx.and_(a, b));
}

/// Sign-extends or drops high bits.
template <class Ctx>
Bits<Ctx> resize(Ctx& ctx, const Bits<Ctx>& a, int width) {
  Bits<Ctx> out(a.begin(), a.begin() + std::min<std::ptrdiff_t>(width, std::ssize(a)));
  const auto sign = a.empty() ? ctx.constant(false) : a.back();
  while (std::ssize(out) < width) out.push_back(sign);
  return out;
}

/// Zero-extends or drops high bits.
template <class Ctx>
Bits<Ctx> resize_unsigned(Ctx& ctx, const Bits<Ctx>& a, int width) {
  Bits<Ctx> out(a.begin(), a.begin() + std::min<std::ptrdiff_t>(width, std::ssize(a)));
  while (std::ssize(out) < width) out.push_back(ctx.constant(false));
  return out;
}

// Ripple adder modulo 2^w; w - 1 AND gates since the final carry is unused.
template <class Ctx>
Bits<Ctx> add_carry(Ctx& ctx, const Bits<Ctx>& a, const Bits<Ctx>& b, typename Ctx::Bit carry) {
  HPI_ENFORCE(a.size() == b.size(), kShapeMismatch, "adder widths ", a.size(), " and ", b.size());
  Bits<Ctx> out;
  out.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto ac = ctx.xor_(a[i], carry);
    const auto bc = ctx.xor_(b[i], carry);
    out.push_back(ctx.xor_(ac, b[i]));
    if (i + 1 < a.size()) carry = ctx.xor_(carry, ctx.and_(ac, bc));
  }
  return out;
}

template <class Ctx>
Bits<Ctx> add(Ctx& ctx, const Bits<Ctx>& a, const Bits<Ctx>& b) {
  return add_carry(ctx, a, b, ctx.constant(false));
}

template <class Ctx>
Bits<Ctx> bit_not(Ctx& ctx, const Bits<Ctx>& a) {
  Bits<Ctx> out;
  out.reserve(a.size());
  for (const auto& x : a) out.push_back(ctx.not_(x));
  return out;
}

template <class Ctx>
Bits<Ctx> sub(Ctx& ctx, const Bits<Ctx>& a, const Bits<Ctx>& b) {
  return add_carry(ctx, a, bit_not(ctx, b), ctx.constant(true));
}

template <class Ctx>
Bits<Ctx> neg(Ctx& ctx, const Bits<Ctx>& a) {
  return sub(ctx, constant(ctx, 0, static_cast<int>(a.size())), a);
}

/// a < b for signed operands of equal width.
template <class Ctx>
typename Ctx::Bit less_signed(Ctx& ctx, const Bits<Ctx>& a, const Bits<Ctx>& b) {
  const int w = static_cast<int>(a.size()) + 1;
  return sub(ctx, resize(ctx, a, w), resize(ctx, b, w)).back();
}

/// s ? a : b
template <class Ctx>
Bits<Ctx> mux(Ctx& ctx, typename Ctx::Bit s, const Bits<Ctx>& a, const Bits<Ctx>& b) {
  HPI_ENFORCE(a.size() == b.size(), kShapeMismatch, "mux widths ", a.size(), " and ", b.size());
  Bits<Ctx> out;
  out.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.push_back(ctx.xor_(b[i], ctx.and_(s, ctx.xor_(a[i], b[i]))));
  return out;
}

template <class Ctx>
Bits<Ctx> max(Ctx& ctx, const Bits<Ctx>& a, const Bits<Ctx>& b) {
  return mux(ctx, less_signed(ctx, a, b), b, a);
}

/// Signed product modulo 2^out_width. Each partial product is added only
/// into the bits at or above its offset.
template <class Ctx>
Bits<Ctx> mul(Ctx& ctx, const Bits<Ctx>& a, const Bits<Ctx>& b, int out_width) {
  const auto ax = resize(ctx, a, out_width);
  const auto bx = resize(ctx, b, out_width);
  Bits<Ctx> acc = constant(ctx, 0, out_width);
  for (int j = 0; j < out_width; ++j) {
    const auto bj = bx[static_cast<std::size_t>(j)];
    if (ctx.is_zero(bj)) continue;
    Bits<Ctx> row, tail(acc.begin() + j, acc.end());
    for (int i = 0; i + j < out_width; ++i) row.push_back(ctx.and_(ax[static_cast<std::size_t>(i)], bj));
    tail = add(ctx, tail, row);
    std::copy(tail.begin(), tail.end(), acc.begin() + j);
  }
  return acc;
}

/// Product by a public constant; only the set bits contribute adders.
template <class Ctx>
Bits<Ctx> mul_const(Ctx& ctx, const Bits<Ctx>& a, std::int64_t k, int out_width) {
  return mul(ctx, a, constant(ctx, k, 64), out_width);
}

/// Arithmetic right shift by a public amount (floor division by 2^k).
template <class Ctx>
Bits<Ctx> ashr(Ctx& ctx, const Bits<Ctx>& a, int k) {
  const int w = static_cast<int>(a.size());
  if (k >= w) return Bits<Ctx>(a.size(), a.back());
  Bits<Ctx> out(a.begin() + k, a.end());
  return resize(ctx, out, w);
}

template <class Ctx>
Bits<Ctx> shl(Ctx& ctx, const Bits<Ctx>& a, int k) {
  Bits<Ctx> out = constant(ctx, 0, static_cast<int>(a.size()));
  for (std::size_t i = 0; i + static_cast<std::size_t>(k) < a.size(); ++i)
    out[i + static_cast<std::size_t>(k)] = a[i];
  return out;
}

/// Clamps a signed value into `width` bits. `overflow` is set when the
/// value did not fit.
template <class Ctx>
Bits<Ctx> saturate(Ctx& ctx, const Bits<Ctx>& a, int width, typename Ctx::Bit* overflow) {
  if (std::ssize(a) <= width) {
    if (overflow) *overflow = ctx.constant(false);
    return resize(ctx, a, width);
  }
  const auto sign = a.back();
  const auto top = a[static_cast<std::size_t>(width - 1)];
  auto over = ctx.constant(false);
  for (std::size_t i = static_cast<std::size_t>(width); i < a.size(); ++i)
    over = bit_or(ctx, over, ctx.xor_(a[i], top));
  Bits<Ctx> low(a.begin(), a.begin() + width);
  // Clamp value: sign ? 100..0 : 011..1, i.e. top bit = sign, others = !sign.
  Bits<Ctx> clamp;
  for (int i = 0; i < width - 1; ++i) clamp.push_back(ctx.not_(sign));
  clamp.push_back(sign);
  if (overflow) *overflow = over;
  return mux(ctx, over, clamp, low);
}

/// table[idx] for a public table; idx is unsigned.
template <class Ctx>
Bits<Ctx> lookup(Ctx& ctx, const Bits<Ctx>& idx, std::span<const std::int64_t> table, int width) {
  std::vector<Bits<Ctx>> level;
  const std::size_t n = std::size_t{1} << idx.size();
  level.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    level.push_back(constant(ctx, i < table.size() ? table[i] : 0, width));
  for (const auto& s : idx) {
    std::vector<Bits<Ctx>> next;
    next.reserve(level.size() / 2);
    for (std::size_t i = 0; i + 1 < level.size(); i += 2)
      next.push_back(mux(ctx, s, level[i + 1], level[i]));
    level = std::move(next);
  }
  return level.front();
}

template <class Ctx>
Bits<Ctx> relu(Ctx& ctx, const Bits<Ctx>& a) {
  const auto keep = ctx.not_(a.back());
  Bits<Ctx> out;
  out.reserve(a.size());
  for (const auto& x : a) out.push_back(ctx.and_(keep, x));
  return out;
}

/// OR of all bits in [lo, hi).
template <class Ctx>
typename Ctx::Bit any_bit(Ctx& ctx, const Bits<Ctx>& a, std::size_t lo, std::size_t hi) {
  auto r = ctx.constant(false);
  for (std::size_t i = lo; i < hi && i < a.size(); ++i) r = bit_or(ctx, r, a[i]);
  return r;
}

// ---------------------------------------------------------------------------
// Direct evaluation context

struct PlainCtx {
  using Bit = bool;
  Bit constant(bool v) { return v; }
  Bit xor_(Bit a, Bit b) { return a != b; }
  Bit and_(Bit a, Bit b) { return a && b; }
  Bit not_(Bit a) { return !a; }
  bool is_zero(Bit a) const { return !a; }
};

inline std::vector<bool> to_bits(std::int64_t v, int width) {
  PlainCtx ctx;
  return constant(ctx, v, width);
}

inline std::int64_t from_bits(const std::vector<bool>& bits) {
  HPI_ENFORCE(!bits.empty() && bits.size() <= 64, kInvalidArgument, "bad width ", bits.size());
  std::uint64_t u = 0;
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) u |= std::uint64_t{1} << i;
  if (bits.size() < 64 && bits.back()) u |= ~std::uint64_t{0} << bits.size();
  return static_cast<std::int64_t>(u);
}

inline std::uint64_t from_bits_unsigned(const std::vector<bool>& bits) {
  std::uint64_t u = 0;
  for (std::size_t i = 0; i < bits.size() && i < 64; ++i)
    if (bits[i]) u |= std::uint64_t{1} << i;
  return u;
}

}  // namespace hpi::nonpoly
