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

#include <gtest/gtest.h>

#include <cmath>

#include "hpi/numeric.hpp"

namespace hpi {
namespace {

// Schoolbook oracle, accumulating in a different loop order than mat_mul.
FixedTensor oracle_mat_mul(const FixedTensor& a, const FixedTensor& b) {
  FixedTensor out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      Word acc = 0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(k, j);
      out.at(i, j) = acc;
    }
  return out;
}

TEST(FixedPoint, EncodeExamples) {
  RingParams p;
  EXPECT_EQ(fx_encode(1.5, p), 384u);
  EXPECT_EQ(fx_encode(0.0, p), 0u);
  EXPECT_EQ(fx_encode(-1.0, p), static_cast<Word>(-256));
  EXPECT_EQ(p.to_signed(fx_encode(-1.0, p)), -256);
}

TEST(FixedPoint, EncodeRejectsOutOfRange) {
  RingParams p;
  EXPECT_THROW(fx_encode(64.0, p), Error);
  EXPECT_THROW(fx_encode(-64.0, p), Error);
  EXPECT_THROW(fx_encode(NAN, p), Error);
  EXPECT_NO_THROW(fx_encode(63.99, p));
}

TEST(FixedPoint, DecodeRoundTripWithinHalfUlp) {
  RingParams p;
  CounterRng rng(7);
  for (int i = 0; i < 2000; ++i) {
    const double x = rng.uniform(-63.9, 63.9);
    EXPECT_LE(std::fabs(fx_decode(fx_encode(x, p), p) - x), std::ldexp(1.0, -p.frac_bits - 1));
  }
}

TEST(FixedPoint, TruncatedProductErrorBound) {
  RingParams p;
  CounterRng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const double a = rng.uniform(-7.9, 7.9), b = rng.uniform(-7.9, 7.9);
    FixedTensor prod(1, 1, {fx_encode(a, p) * fx_encode(b, p)});
    const double got = fx_decode(truncate(prod, p).data[0], p);
    // Input rounding of half an ulp each, propagated, plus the floor.
    const double h = std::ldexp(1.0, -p.frac_bits - 1);
    const double bound = (std::fabs(a) + std::fabs(b)) * h + h * h + 2 * h;
    EXPECT_LE(std::fabs(got - a * b), bound) << a << " * " << b;
  }
}

TEST(Truncate, Examples) {
  RingParams p;
  FixedTensor sq(1, 1, {Word{384} * 384});
  EXPECT_EQ(sq.data[0], 147456u);
  EXPECT_EQ(truncate(sq, p).data[0], 576u);
  EXPECT_EQ(truncate(FixedTensor(1, 1), p).data[0], 0u);
}

TEST(Truncate, FloorsNegatives) {
  RingParams p;
  FixedTensor t(1, 2, {p.from_signed(-1), p.from_signed(-257)});
  const auto r = truncate(t, p);
  EXPECT_EQ(p.to_signed(r.data[0]), -1);
  EXPECT_EQ(p.to_signed(r.data[1]), -2);
}

TEST(Truncate, SaturatesAgainstOracle) {
  RingParams p;
  CounterRng rng(3);
  FixedTensor t(1, 500);
  for (auto& w : t.data) w = p.from_signed(static_cast<std::int64_t>(rng() % (1u << 26)) - (1 << 25));
  std::size_t sat = 0;
  const auto r = truncate(t, p, -1, &sat);
  std::size_t expect_sat = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    // Oracle: floor division then clamp.
    const double q = std::floor(static_cast<double>(p.to_signed(t.data[i])) / 256.0);
    const double c = std::min(16383.0, std::max(-16384.0, q));
    if (c != q) ++expect_sat;
    EXPECT_EQ(static_cast<double>(p.to_signed(r.data[i])), c);
  }
  EXPECT_EQ(sat, expect_sat);
  EXPECT_GT(sat, 0u);

  FixedTensor big(1, 1, {p.from_signed((std::int64_t{1} << 14) * 256 + 5)});
  EXPECT_EQ(p.to_signed(truncate(big, p).data[0]), (1 << 14) - 1);
}

TEST(MatMul, Examples) {
  CounterRng rng(5);
  const auto b = random_ring(2, 3, rng);
  EXPECT_EQ(mat_mul(identity(2), b), b);
  EXPECT_EQ(mat_mul(FixedTensor(1, 1, {3}), FixedTensor(1, 1, {4})).data[0], 12u);
  EXPECT_THROW(mat_mul(FixedTensor(2, 3), FixedTensor(2, 3)), Error);
}

TEST(MatMul, MatchesOracleOnRandomInstances) {
  CounterRng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng() % 5, k = 1 + rng() % 5, n = 1 + rng() % 5;
    const auto a = random_ring(m, k, rng);
    const auto b = random_ring(k, n, rng);
    EXPECT_EQ(mat_mul(a, b), oracle_mat_mul(a, b));
  }
  const auto a = random_ring(3, 4, rng), b = random_ring(4, 2, rng);
  EXPECT_EQ(mat_mul(a, b), oracle_mat_mul(a, b));
}

TEST(MatMul, AssociativeModuloRing) {
  CounterRng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_ring(3, 4, rng), b = random_ring(4, 5, rng), c = random_ring(5, 2, rng);
    EXPECT_EQ(mat_mul(mat_mul(a, b), c), mat_mul(a, mat_mul(b, c)));
  }
}

TEST(MatMul, SmallRingReduces) {
  RingParams p{.modulus_bits = 8, .value_bits = 3, .frac_bits = 1, .max_reduction_dim = 4};
  p.validate();
  const FixedTensor a(1, 2, {200, 100}), b(2, 1, {3, 5});
  EXPECT_EQ(mat_mul(a, b, p).data[0], (200u * 3 + 100u * 5) % 256);
}

TEST(Ring, AbelianGroupLaws) {
  for (int bits : {8, 32, 64}) {
    RingParams p{.modulus_bits = bits, .value_bits = 3, .frac_bits = 1, .max_reduction_dim = 4};
    CounterRng rng(bits);
    for (int i = 0; i < 300; ++i) {
      const auto a = random_ring(2, 3, rng, p), b = random_ring(2, 3, rng, p),
                 c = random_ring(2, 3, rng, p);
      EXPECT_EQ(add(a, b, p), add(b, a, p));
      EXPECT_EQ(add(add(a, b, p), c, p), add(a, add(b, c, p), p));
      EXPECT_EQ(add(a, FixedTensor(2, 3), p), a);
      EXPECT_EQ(add(a, neg(a, p), p), FixedTensor(2, 3));
      EXPECT_EQ(sub(a, b, p), add(a, neg(b, p), p));
    }
  }
}

TEST(RingParams, HeadroomValidation) {
  EXPECT_NO_THROW(RingParams{}.validate());
  RingParams tight{.modulus_bits = 32, .value_bits = 15, .frac_bits = 8, .max_reduction_dim = 8};
  EXPECT_THROW(tight.validate(), Error);
  RingParams bad_frac{.modulus_bits = 64, .value_bits = 15, .frac_bits = 15};
  EXPECT_THROW(bad_frac.validate(), Error);
}

}  // namespace
}  // namespace hpi
