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
#include <cstdint>
#include <vector>

#include "hpi/error.hpp"
#include "hpi/nonpoly/fixed_int.hpp"

// Fixed-point nonlinear functions over a bit context. Inputs and outputs are
// signed `width`-bit values with `frac` fractional bits.

namespace hpi::nonpoly {

struct FixedFormat {
  int width = 15;
  int frac = 8;
};

namespace tables {

inline constexpr int kSegments = 64;

// exp(-u) for u = i/4, i = 0..64, Q14.
inline std::vector<std::int64_t> exp_knots() {
  std::vector<std::int64_t> k(kSegments + 1);
  for (int i = 0; i <= kSegments; ++i) k[i] = std::llround(std::ldexp(std::exp(-i / 4.0), 14));
  return k;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

// gelu(x) for x = -4 + i/8, i = 0..64, in the value format.
inline std::vector<std::int64_t> gelu_knots(int frac) {
  std::vector<std::int64_t> k(kSegments + 1);
  for (int i = 0; i <= kSegments; ++i) k[i] = std::llround(std::ldexp(gelu(-4.0 + i / 8.0), frac));
  return k;
}

// 1/sqrt(m) seeds, Q16, indexed by the top four bits of m in [0.25, 1).
inline std::vector<std::int64_t> rsqrt_seeds() {
  std::vector<std::int64_t> k(16, 0);
  for (int i = 4; i < 16; ++i) k[i] = std::llround(65536.0 / std::sqrt((i + 0.5) / 16.0));
  return k;
}

}  // namespace tables

template <class V>
V slice(const V& a, int lo, int hi) {
  return V(a.begin() + lo, a.begin() + hi);
}

/// Reinterprets the low `bits` bits as a non-negative value with a constant
/// zero sign bit, which keeps later products cheap. Caller guarantees range.
template <class Ctx>
Bits<Ctx> nonneg(Ctx& ctx, const Bits<Ctx>& a, int bits) {
  Bits<Ctx> out = resize_unsigned(ctx, a, bits);
  out.push_back(ctx.constant(false));
  return out;
}

template <class Ctx>
void raise(Ctx& ctx, typename Ctx::Bit& flag, typename Ctx::Bit b) {
  flag = bit_or(ctx, flag, b);
}

template <class Ctx>
typename Ctx::Bit is_zero_value(Ctx& ctx, const Bits<Ctx>& a) {
  return ctx.not_(any_bit(ctx, a, 0, a.size()));
}

/// Piecewise-linear table over 64 equal segments of 2^seg_shift raw units.
/// `u` is non-negative and below 64 * 2^seg_shift.
template <class Ctx>
Bits<Ctx> pwl(Ctx& ctx, const Bits<Ctx>& u, int seg_shift, const std::vector<std::int64_t>& knots,
              int width) {
  std::vector<std::int64_t> base(knots.begin(), knots.end() - 1), slope(tables::kSegments);
  for (int i = 0; i < tables::kSegments; ++i) slope[i] = knots[i + 1] - knots[i];
  const auto idx = slice(u, seg_shift, seg_shift + 6);
  const auto r = nonneg(ctx, slice(u, 0, seg_shift), seg_shift);
  const auto a = lookup(ctx, idx, base, width);
  const auto b = lookup(ctx, idx, slope, width);
  const auto term = ashr(ctx, mul(ctx, b, r, width + seg_shift + 1), seg_shift);
  return add(ctx, resize(ctx, a, width + seg_shift + 1), term);
}

/// Shifts left by each s in `shifts` while the value stays below
/// 2^(top+1), leaving it in [2^top, 2^(top+1)). Returns the decisions.
template <class Ctx>
std::vector<typename Ctx::Bit> normalize(Ctx& ctx, Bits<Ctx>& t, int top,
                                         const std::vector<int>& shifts) {
  std::vector<typename Ctx::Bit> taken;
  for (int s : shifts) {
    const auto small = ctx.not_(any_bit(ctx, t, static_cast<std::size_t>(top + 1 - s), t.size()));
    t = mux(ctx, small, shl(ctx, t, s), t);
    taken.push_back(small);
  }
  return taken;
}

template <class Ctx>
Bits<Ctx> apply_shifts(Ctx& ctx, const Bits<Ctx>& y, const std::vector<typename Ctx::Bit>& taken,
                       const std::vector<int>& shifts, int width) {
  Bits<Ctx> out = resize(ctx, y, width);
  for (std::size_t i = 0; i < shifts.size(); ++i)
    out = mux(ctx, taken[i], shl(ctx, out, shifts[i]), out);
  return out;
}

/// 2^16 / d for d in [2^16, 2^17): linear seed, two Newton steps.
template <class Ctx>
Bits<Ctx> recip_newton(Ctx& ctx, const Bits<Ctx>& d) {
  constexpr int W = 40;
  const std::int64_t c1 = std::llround(24.0 / 17.0 * 65536.0);
  const std::int64_t c2 = std::llround(8.0 / 17.0 * 65536.0);
  auto y = sub(ctx, constant(ctx, c1, W), ashr(ctx, mul_const(ctx, d, c2, W), 16));
  y = nonneg(ctx, y, 17);
  for (int it = 0; it < 2; ++it) {
    const auto dy = nonneg(ctx, ashr(ctx, mul(ctx, d, y, W), 16), 18);
    const auto two = nonneg(ctx, sub(ctx, constant(ctx, std::int64_t{1} << 17, 19), dy), 18);
    y = nonneg(ctx, ashr(ctx, mul(ctx, y, two, W), 16), 17);
  }
  return y;
}

/// 2^16 / sqrt(m / 2^16) for m in [2^14, 2^16): table seed, two Newton steps.
template <class Ctx>
Bits<Ctx> rsqrt_newton(Ctx& ctx, const Bits<Ctx>& m) {
  constexpr int W = 44;
  const auto seeds = tables::rsqrt_seeds();
  auto y = nonneg(ctx, lookup(ctx, slice(m, 12, 16), seeds, 19), 18);
  for (int it = 0; it < 2; ++it) {
    const auto y2 = nonneg(ctx, ashr(ctx, mul(ctx, y, y, W), 16), 20);
    const auto my2 = nonneg(ctx, ashr(ctx, mul(ctx, m, y2, W), 16), 20);
    const auto three = nonneg(ctx, sub(ctx, constant(ctx, 3 * 65536, 21), my2), 19);
    y = nonneg(ctx, ashr(ctx, mul(ctx, y, three, W), 17), 18);
  }
  return y;
}

template <class Ctx>
Bits<Ctx> max_reduce(Ctx& ctx, const std::vector<Bits<Ctx>>& xs) {
  HPI_ENFORCE(!xs.empty(), kShapeMismatch, "max of an empty row");
  Bits<Ctx> m = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) m = max(ctx, m, xs[i]);
  return m;
}

// exp(-u) in Q14 for non-negative u in the value format; 0 beyond u = 16.
template <class Ctx>
Bits<Ctx> exp_neg_q14(Ctx& ctx, const Bits<Ctx>& u, FixedFormat fmt) {
  HPI_ENFORCE(fmt.frac >= 2, kInvalidArgument, "exp table needs at least 2 fractional bits");
  const auto big = any_bit(ctx, u, static_cast<std::size_t>(fmt.frac + 4), u.size());
  auto e = pwl(ctx, u, fmt.frac - 2, tables::exp_knots(), 17);
  const auto keep = ctx.not_(big);
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = ctx.and_(keep, e[i]);
  return nonneg(ctx, e, 15);
}

/// exp(z) for z <= 0. Positive inputs are flagged and treated as 0.
template <class Ctx>
Bits<Ctx> exp_approx(Ctx& ctx, const Bits<Ctx>& z, FixedFormat fmt, typename Ctx::Bit& flag) {
  const int w = fmt.width;
  const auto positive = ctx.and_(ctx.not_(z.back()), ctx.not_(is_zero_value(ctx, z)));
  raise(ctx, flag, positive);
  auto u = neg(ctx, resize(ctx, z, w + 1));
  u = mux(ctx, positive, constant(ctx, 0, w + 1), u);
  const auto e = exp_neg_q14(ctx, u, fmt);
  typename Ctx::Bit of;
  const auto out = fmt.frac <= 14 ? ashr(ctx, e, 14 - fmt.frac) : shl(ctx, resize(ctx, e, 15 + fmt.frac), fmt.frac - 14);
  auto r = saturate(ctx, out, w, &of);
  raise(ctx, flag, of);
  return r;
}

/// Max-subtracted softmax with a normalized reciprocal of the row sum.
template <class Ctx>
std::vector<Bits<Ctx>> softmax_row(Ctx& ctx, const std::vector<Bits<Ctx>>& z, FixedFormat fmt,
                                   typename Ctx::Bit& flag) {
  const int w = fmt.width, f = fmt.frac;
  HPI_ENFORCE(!z.empty() && z.size() <= 4096, kShapeMismatch, "softmax row of ", z.size());
  const auto m = resize(ctx, max_reduce(ctx, z), w + 1);

  std::vector<Bits<Ctx>> e;
  e.reserve(z.size());
  constexpr int kSumW = 33;
  Bits<Ctx> sum = constant(ctx, 0, kSumW);
  for (const auto& zi : z) {
    const auto u = sub(ctx, m, resize(ctx, zi, w + 1));
    e.push_back(exp_neg_q14(ctx, u, fmt));
    sum = add(ctx, sum, resize(ctx, e.back(), kSumW));
  }
  // The row maximum contributes exp(0), so sum >= 2^14.
  const std::vector<int> shifts{16, 8, 4, 2, 1};
  const auto taken = normalize(ctx, sum, 30, shifts);
  const auto d = nonneg(ctx, slice(sum, 14, 31), 17);
  const auto y = recip_newton(ctx, d);
  const auto q = nonneg(ctx, apply_shifts(ctx, y, taken, shifts, 36), 34);

  std::vector<Bits<Ctx>> out;
  out.reserve(z.size());
  const auto half = constant(ctx, std::int64_t{1} << (45 - f), 52);
  for (const auto& ei : e) {
    const auto p = ashr(ctx, add(ctx, mul(ctx, ei, q, 52), half), 46 - f);
    typename Ctx::Bit of;
    out.push_back(saturate(ctx, p, w, &of));
    raise(ctx, flag, of);
  }
  return out;
}

/// 1/x. Non-positive inputs are flagged; results saturate.
template <class Ctx>
Bits<Ctx> reciprocal(Ctx& ctx, const Bits<Ctx>& x, FixedFormat fmt, typename Ctx::Bit& flag) {
  const int w = fmt.width, f = fmt.frac;
  HPI_ENFORCE(w <= 31 && 2 * f <= 46, kInvalidArgument, "reciprocal format out of range");
  const auto nonpos = bit_or(ctx, x.back(), is_zero_value(ctx, x));
  raise(ctx, flag, nonpos);
  Bits<Ctx> t = mux(ctx, nonpos, constant(ctx, 1, 33), resize(ctx, x, 33));
  const std::vector<int> shifts{16, 8, 4, 2, 1};
  const auto taken = normalize(ctx, t, 30, shifts);
  const auto d = nonneg(ctx, slice(t, 14, 31), 17);
  const auto y = recip_newton(ctx, d);
  const auto q = apply_shifts(ctx, y, taken, shifts, 50);
  typename Ctx::Bit of;
  auto out = saturate(ctx, ashr(ctx, q, 46 - 2 * f), w, &of);
  raise(ctx, flag, of);
  return out;
}

/// (x - mean) / sqrt(var + 2^-8) over one row.
template <class Ctx>
std::vector<Bits<Ctx>> layernorm_row(Ctx& ctx, const std::vector<Bits<Ctx>>& x, FixedFormat fmt,
                                     typename Ctx::Bit& flag) {
  const int w = fmt.width, f = fmt.frac;
  const std::size_t L = x.size();
  HPI_ENFORCE(L >= 1 && L <= 4096, kShapeMismatch, "layernorm row of ", L);
  HPI_ENFORCE(f >= 4 && 2 * f - 8 >= 0 && w <= 16, kInvalidArgument, "layernorm format out of range");
  const std::int64_t inv_len = std::llround(65536.0 / static_cast<double>(L));
  const int len_bits = std::bit_width(L);

  const int sw = w + len_bits + 1;
  Bits<Ctx> sum = constant(ctx, 0, sw);
  for (const auto& xi : x) sum = add(ctx, sum, resize(ctx, xi, sw));
  const auto mean = resize(ctx, ashr(ctx, mul_const(ctx, sum, inv_len, sw + 18), 16), w + 2);

  const int cw = w + 2;
  const int qw = 2 * cw;
  const int vw = qw + len_bits + 1;
  std::vector<Bits<Ctx>> c;
  c.reserve(L);
  Bits<Ctx> sumsq = constant(ctx, 0, vw);
  for (const auto& xi : x) {
    c.push_back(sub(ctx, resize(ctx, xi, cw), mean));
    sumsq = add(ctx, sumsq, resize(ctx, mul(ctx, c.back(), c.back(), qw), vw));
  }
  auto var = ashr(ctx, mul_const(ctx, sumsq, inv_len, vw + 18), 16);
  const int V = 2 * w + 2;
  var = add(ctx, resize(ctx, var, V + 2), constant(ctx, std::int64_t{1} << (2 * f - 8), V + 2));
  Bits<Ctx> v = nonneg(ctx, var, V);

  std::vector<int> vshifts, yshifts;
  for (int s = 2; s < V - 2; s *= 2) vshifts.insert(vshifts.begin(), s);
  for (int s : vshifts) yshifts.push_back(s / 2);
  const auto taken = normalize(ctx, v, V - 1, vshifts);
  // Top bit now at V-1 or V-2; keep 16 bits.
  const auto m = nonneg(ctx, slice(v, V - 16, V), 16);
  const auto y = rsqrt_newton(ctx, m);
  int ymax = 18;
  for (int s : yshifts) ymax += s;
  const auto q = nonneg(ctx, apply_shifts(ctx, y, taken, yshifts, ymax + 1), ymax);

  std::vector<Bits<Ctx>> out;
  out.reserve(L);
  const int shift = 16 + V / 2 - f;
  for (const auto& ci : c) {
    const auto p = ashr(ctx, mul(ctx, ci, q, cw + ymax + 2), shift);
    typename Ctx::Bit of;
    out.push_back(saturate(ctx, p, w, &of));
    raise(ctx, flag, of);
  }
  return out;
}

/// Table GELU on [-4, 4); identity above, zero below.
template <class Ctx>
Bits<Ctx> gelu(Ctx& ctx, const Bits<Ctx>& x, FixedFormat fmt) {
  const int w = fmt.width, f = fmt.frac;
  HPI_ENFORCE(f >= 3 && w >= f + 4, kInvalidArgument, "gelu format out of range");
  const auto u = add(ctx, resize(ctx, x, w + 1), constant(ctx, std::int64_t{4} << f, w + 1));
  const auto below = u.back();
  const auto above = ctx.not_(less_signed(ctx, u, constant(ctx, std::int64_t{8} << f, w + 1)));
  const auto g = resize(ctx, pwl(ctx, u, f - 3, tables::gelu_knots(f), f + 6), w);
  return mux(ctx, above, x, mux(ctx, below, constant(ctx, 0, w), g));
}

}  // namespace hpi::nonpoly
