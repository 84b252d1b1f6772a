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

#include "hpi/nonpoly/circuit.hpp"
#include "hpi/nonpoly/fixed_int.hpp"
#include "hpi/nonpoly/garble.hpp"
#include "hpi/nonpoly/ot.hpp"
#include "hpi/rng.hpp"

namespace hpi::nonpoly {
namespace {

std::array<unsigned char, 32> seed_of(std::uint64_t s) {
  std::array<unsigned char, 32> out{};
  for (int i = 0; i < 8; ++i) out[static_cast<std::size_t>(i)] = static_cast<unsigned char>(s >> (8 * i));
  return out;
}

std::vector<bool> run(const Circuit& c, const std::vector<bool>& g, const std::vector<bool>& e,
                      std::uint64_t seed, GarbledCircuit* material = nullptr) {
  auto [gc, keys] = garble(c, seed_of(seed));
  std::vector<Block> labels;
  for (std::size_t i = 0; i < g.size(); ++i) labels.push_back(keys.label(i, g[i]));
  for (std::size_t i = 0; i < e.size(); ++i) labels.push_back(keys.label(g.size() + i, e[i]));
  if (material) *material = gc;
  return gc_eval(c, gc, labels);
}

TEST(Garble, SingleAndGateTruthTable) {
  CircuitBuilder b;
  const auto x = b.garbler_input();
  const auto y = b.evaluator_input();
  b.output(b.and_(x, y));
  const Circuit c = std::move(b).finish();
  for (int a = 0; a < 2; ++a)
    for (int v = 0; v < 2; ++v) {
      GarbledCircuit gc;
      const auto out = run(c, {a == 1}, {v == 1}, 7 + static_cast<std::uint64_t>(2 * a + v), &gc);
      ASSERT_EQ(out.size(), 1u);
      EXPECT_EQ(out[0], a == 1 && v == 1);
      EXPECT_EQ(gc.table_bytes(), 4 * kLabelBytes);
    }
}

TEST(Garble, XorOnlyCircuitHasNoTables) {
  CircuitBuilder b;
  Bits<CircuitBuilder> x, y;
  for (int i = 0; i < 8; ++i) x.push_back(b.garbler_input());
  for (int i = 0; i < 8; ++i) y.push_back(b.evaluator_input());
  for (int i = 0; i < 8; ++i) b.output(b.not_(b.xor_(x[static_cast<std::size_t>(i)], y[static_cast<std::size_t>(i)])));
  const Circuit c = std::move(b).finish();
  GarbledCircuit gc;
  const auto out = run(c, to_bits(0x5a, 8), to_bits(0x0f, 8), 1, &gc);
  EXPECT_EQ(gc.table_bytes(), 0u);
  EXPECT_EQ(from_bits_unsigned(out), std::uint64_t{0xff & ~(0x5a ^ 0x0f)});
}

TEST(Garble, EightBitAdderMatchesCleartext) {
  CircuitBuilder b;
  Bits<CircuitBuilder> x, y;
  for (int i = 0; i < 8; ++i) x.push_back(b.garbler_input());
  for (int i = 0; i < 8; ++i) y.push_back(b.evaluator_input());
  for (auto w : add(b, x, y)) b.output(w);
  b.output(kConstOne);
  const Circuit c = std::move(b).finish();
  EXPECT_EQ(c.and_count(), 7u);
  CounterRng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = rng() & 0xff, v = rng() & 0xff;
    const auto g = to_bits(static_cast<std::int64_t>(a), 8), e = to_bits(static_cast<std::int64_t>(v), 8);
    const auto out = run(c, g, e, rng());
    ASSERT_EQ(out, evaluate(c, g, e));
    ASSERT_EQ(from_bits_unsigned(std::vector<bool>(out.begin(), out.begin() + 8)), (a + v) & 0xff);
    ASSERT_TRUE(out[8]);
  }
}

TEST(Garble, TamperedMaterialFailsToDecode) {
  CircuitBuilder b;
  Bits<CircuitBuilder> x, y;
  for (int i = 0; i < 4; ++i) x.push_back(b.garbler_input());
  for (int i = 0; i < 4; ++i) y.push_back(b.evaluator_input());
  for (auto w : mul(b, x, y, 4)) b.output(w);
  const Circuit c = std::move(b).finish();
  auto [gc, keys] = garble(c, seed_of(9));
  std::vector<Block> labels;
  for (std::size_t i = 0; i < c.num_inputs(); ++i) labels.push_back(keys.label(i, true));
  EXPECT_NO_THROW(gc_eval(c, gc, labels));
  int failures = 0;
  for (std::size_t t = 0; t < gc.tables.size(); ++t) {
    auto bad = gc;
    bad.tables[t].hi ^= 1;
    try {
      gc_eval(c, bad, labels);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kDecodeFailure);
      ++failures;
    }
  }
  // Only the rows selected by this input assignment are ever read.
  EXPECT_GE(failures, static_cast<int>(c.and_count()) / 2);
  auto short_gc = gc;
  short_gc.tables.pop_back();
  try {
    gc_eval(c, short_gc, labels);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDecodeFailure);
  }
}

TEST(Garble, FreshSeedsGiveUnrelatedLabels) {
  CircuitBuilder b;
  const auto x = b.garbler_input();
  b.output(b.and_(x, b.evaluator_input()));
  const Circuit c = std::move(b).finish();
  const auto k1 = garble(c, seed_of(1)).second, k2 = garble(c, seed_of(2)).second;
  EXPECT_FALSE(k1.delta == k2.delta);
  EXPECT_TRUE(k1.delta.lsb());
  EXPECT_FALSE(k1.input_zero[0] == k2.input_zero[0]);
}

TEST(Ot, ReceiverLearnsExactlyTheChosenMessages) {
  CounterRng rng(11);
  const std::size_t k = 40;
  std::vector<std::array<Block, 2>> msgs(k);
  std::vector<bool> choices(k);
  for (std::size_t i = 0; i < k; ++i) {
    msgs[i] = {Block{rng(), rng()}, Block{rng(), rng()}};
    choices[i] = (rng() & 1) != 0;
  }
  OtSender sender;
  OtReceiver receiver;
  const auto points = receiver.choose(sender.setup(), choices);
  const auto masked = sender.respond(points, msgs);
  const auto got = receiver.finish(masked);
  for (std::size_t i = 0; i < k; ++i) {
    EXPECT_EQ(got[i], msgs[i][choices[i] ? 1 : 0]);
    EXPECT_FALSE(got[i] == msgs[i][choices[i] ? 0 : 1]);
  }
  const auto t = ot_traffic(k);
  EXPECT_EQ(t.sender_setup, 32u);
  EXPECT_EQ(t.receiver, points.size() * kOtPointBytes);
  EXPECT_EQ(t.sender, masked.size() * 2 * kLabelBytes);
  EXPECT_EQ(ot_traffic(0).total(), 0u);
}

TEST(Ot, RejectsInvalidPoints) {
  OtSender sender;
  OtReceiver receiver;
  Point junk;
  junk.fill(0xff);
  try {
    receiver.choose(junk, {true});
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDecodeFailure);
  }
  try {
    sender.respond({junk}, {{Block{}, Block{}}});
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDecodeFailure);
  }
}

}  // namespace
}  // namespace hpi::nonpoly
