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

#include <set>

#include "hpi/packing.hpp"

namespace hpi::packing {
namespace {

he::HeParams params(std::size_t slots) {
  he::HeParams p;
  p.slots = slots;
  return p;
}

TEST(Layout, IndexFormulas) {
  const auto ff = make_layout(Strategy::kFeaturesFirst, 3, 5, 8);
  const auto tf = make_layout(Strategy::kTokensFirst, 3, 5, 8);
  EXPECT_EQ(ff.c, 2u);
  EXPECT_EQ(tf.c, 2u);
  EXPECT_EQ(ff.linear_index(2, 1), 11u);
  EXPECT_EQ(tf.linear_index(2, 1), 5u);
  EXPECT_EQ(ff.locate(2, 1).ct, 1u);
  EXPECT_EQ(ff.locate(2, 1).slot, 3u);
  EXPECT_EQ(ff.predicted_rotations, 16u);
  EXPECT_EQ(tf.predicted_rotations, 2u * 3u);
  EXPECT_FALSE(ff.entry(1, 7).has_value());
}

TEST(Layout, BijectiveOverUsedSlots) {
  for (auto s : {Strategy::kFeaturesFirst, Strategy::kTokensFirst})
    for (std::size_t n : {1, 3, 4, 8})
      for (std::size_t d : {1, 5, 16}) {
        const auto l = make_layout(s, n, d, 16);
        std::set<std::pair<std::size_t, std::size_t>> seen;
        std::size_t used = 0;
        for (std::size_t k = 0; k < l.c; ++k) {
          used += l.used_slots(k);
          for (std::size_t slot = 0; slot < l.used_slots(k); ++slot) {
            const auto e = l.entry(k, slot);
            ASSERT_TRUE(e.has_value());
            const auto r = l.locate(e->first, e->second);
            EXPECT_EQ(r.ct, k);
            EXPECT_EQ(r.slot, slot);
            seen.insert(*e);
          }
        }
        EXPECT_EQ(used, n * d);
        EXPECT_EQ(seen.size(), n * d);
      }
}

TEST(Layout, PlanPrefersTokensFirstOnlyWhenStrictlyCheaper) {
  EXPECT_EQ(plan_layout(4, 16, 16).strategy, Strategy::kTokensFirst);
  EXPECT_EQ(plan_layout(1, 16, 16).strategy, Strategy::kFeaturesFirst);
  EXPECT_THROW(plan_layout(32, 2, 16), Error);
}

TEST(Layout, ConfigRoundTrip) {
  const auto l = make_layout(Strategy::kTokensFirst, 4, 7, 64);
  EXPECT_EQ(layout_from_config(layout_to_config(l)), l);
  EXPECT_THROW(layout_from_config("packing.n = 4\n"), Error);
  EXPECT_THROW(layout_from_config("packing.strategy = diagonal\npacking.n=1\npacking.d=1\n"
                                  "packing.slots=8\n"),
               Error);
}

TEST(Pack, RoundTrip) {
  he::Evaluator ev(params(16));
  const auto kp = ev.keygen();
  CounterRng rng(4);
  for (auto s : {Strategy::kFeaturesFirst, Strategy::kTokensFirst}) {
    const auto x = random_ring(5, 7, rng);
    const auto l = make_layout(s, 5, 7, 16);
    EXPECT_EQ(unpack(ev, pack(ev, x, l, kp.pub), kp.sec), x);
    EXPECT_EQ(unpack_plain(pack_plain(x, l), l), x);
  }
}

struct MatCase {
  std::size_t n, d_in, d_out, M;
};

class HeMatmul : public ::testing::TestWithParam<MatCase> {};

TEST_P(HeMatmul, MatchesPlainProductAndRotationPrediction) {
  const auto [n, d_in, d_out, M] = GetParam();
  CounterRng rng(n * 1000 + d_in * 10 + d_out);
  const auto x = random_ring(n, d_in, rng);
  const auto w = random_ring(d_in, d_out, rng);
  const auto expect = mat_mul(x, w);
  for (auto s : {Strategy::kFeaturesFirst, Strategy::kTokensFirst}) {
    CostLedger ledger;
    he::Evaluator ev(params(M), &ledger);
    const auto kp = ev.keygen();
    const auto l = make_layout(s, n, d_in, M);
    const auto enc = pack(ev, x, l, kp.pub);
    const auto before = ledger.total().rotate;
    const auto out = he_matmul(ev, enc, w);
    EXPECT_EQ(unpack(ev, out, kp.sec), expect) << strategy_name(s);
    const auto rotations = ledger.total().rotate - before;
    if (s == Strategy::kFeaturesFirst) {
      EXPECT_EQ(rotations, l.c * M);
    } else if (M % n == 0 && (n * d_in) % M == 0) {
      EXPECT_EQ(rotations, l.c * M / n);
    } else {
      EXPECT_LE(rotations, l.predicted_rotations);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Shapes, HeMatmul,
                         ::testing::Values(MatCase{1, 1, 1, 8}, MatCase{4, 8, 4, 16},
                                           MatCase{4, 8, 8, 16}, MatCase{3, 5, 2, 16},
                                           MatCase{8, 4, 6, 32}, MatCase{2, 16, 3, 8},
                                           MatCase{8, 8, 8, 16}));

TEST(HeMatmul, LogStepKernelMatchesAndUsesFewerRotations) {
  CounterRng rng(8);
  const std::size_t n = 4, d = 16, M = 64;
  const auto x = random_ring(n, d, rng);
  const auto w = random_ring(d, 2, rng);
  CostLedger naive_l, log_l;
  he::Evaluator naive(params(M), &naive_l), logk(params(M), &log_l);
  const auto kp = naive.keygen();
  const auto l = make_layout(Strategy::kTokensFirst, n, d, M);
  const auto a = he_matmul(naive, pack(naive, x, l, kp.pub), w, Kernel::kNaive);
  const auto b = he_matmul(logk, pack(logk, x, l, kp.pub), w, Kernel::kLogStep);
  EXPECT_EQ(unpack(naive, a, kp.sec), mat_mul(x, w));
  EXPECT_EQ(unpack(logk, b, kp.sec), mat_mul(x, w));
  // One halving ladder of log2(M/n) steps per (ciphertext, output column).
  EXPECT_EQ(log_l.total().rotate, l.c * 2 * 4);
  EXPECT_EQ(naive_l.total().rotate, l.c * M / n);
  EXPECT_LT(log_l.total().rotate, naive_l.total().rotate);

  const auto ff = make_layout(Strategy::kFeaturesFirst, n, d, M);
  EXPECT_THROW(he_matmul(logk, pack(logk, x, ff, kp.pub), w, Kernel::kLogStep), Error);
}

TEST(HeMatmul, LeftProducts) {
  CounterRng rng(9);
  he::Evaluator ev(params(16));
  const auto kp = ev.keygen();
  for (auto s : {Strategy::kFeaturesFirst, Strategy::kTokensFirst}) {
    const auto x = random_ring(4, 6, rng);
    const auto u = random_ring(3, 4, rng);
    const auto ut = random_ring(5, 6, rng);
    const auto enc = pack(ev, x, make_layout(s, 4, 6, 16), kp.pub);
    EXPECT_EQ(unpack(ev, he_left_matmul(ev, u, enc), kp.sec), mat_mul(u, x));
    EXPECT_EQ(unpack(ev, he_left_matmul_t(ev, ut, enc), kp.sec), mat_mul(ut, transpose(x)));
  }
}

TEST(HeMatmul, ShapeErrors) {
  he::Evaluator ev(params(16));
  const auto kp = ev.keygen();
  const auto enc = pack(ev, FixedTensor(2, 3), make_layout(Strategy::kTokensFirst, 2, 3, 16), kp.pub);
  EXPECT_THROW(he_matmul(ev, enc, FixedTensor(4, 2)), Error);
  EXPECT_THROW(he_left_matmul(ev, FixedTensor(2, 3), enc), Error);
  he::Evaluator other(params(32));
  EXPECT_THROW(pack(other, FixedTensor(2, 3), make_layout(Strategy::kTokensFirst, 2, 3, 16), kp.pub),
               Error);
}

TEST(Pack, AddOps) {
  CounterRng rng(10);
  he::Evaluator ev(params(8));
  const auto kp = ev.keygen();
  const auto l = make_layout(Strategy::kTokensFirst, 3, 3, 8);
  const auto a = random_ring(3, 3, rng), b = random_ring(3, 3, rng);
  const auto ea = pack(ev, a, l, kp.pub), eb = pack(ev, b, l, kp.pub);
  EXPECT_EQ(unpack(ev, add(ev, ea, eb), kp.sec), hpi::add(a, b));
  EXPECT_EQ(unpack(ev, add_plain(ev, ea, b), kp.sec), hpi::add(a, b));
}

}  // namespace
}  // namespace hpi::packing
