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

#include <sstream>

#include "hpi/protocol/engine.hpp"

namespace hpi::protocol {
namespace {

const RingParams kRing{};

std::optional<ErrorCode> code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

Shared share_of(const FixedTensor& x, CounterRng& rng) {
  const auto [c, s] = sharing::share(x, rng, kRing);
  return {c.value, s.value, false};
}

FixedTensor open(const Shared& x) { return add(x.c, x.s, kRing); }

// Schoolbook product in the ring, independent of numeric::mat_mul.
FixedTensor ring_product(const FixedTensor& a, const FixedTensor& b) {
  FixedTensor c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      Word acc = 0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(k, j);
      c.at(i, j) = acc;
    }
  return c;
}

FixedTensor ring_transpose(const FixedTensor& a) {
  FixedTensor t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

EngineOptions small_opts(std::uint64_t seed = 3) {
  EngineOptions o;
  o.seed = seed;
  return o;
}

TEST(Hgs, IdentityWeightReturnsInput) {
  CounterRng rng(1);
  const auto x = random_fixed(4, 6, rng, -4.0, 4.0, kRing);
  const auto r = run_hgs_layer(share_of(x, rng), identity(6), small_opts());
  EXPECT_EQ(open(r.out), x);
}

TEST(Hgs, RandomLayerIsExactWithNoOnlineHe) {
  CounterRng rng(2);
  const auto x = random_ring(8, 8, rng, kRing);
  const auto w = random_ring(8, 8, rng, kRing);
  const auto r = run_hgs_layer(share_of(x, rng), w, small_opts());
  EXPECT_EQ(open(r.out), ring_product(x, w));
  EXPECT_EQ(r.ledger->phase_total(Phase::kOnline).he_total(), 0u);
  EXPECT_GT(r.ledger->phase_total(Phase::kOffline).he_total(), 0u);
  EXPECT_EQ(r.transcript->interaction_count(Phase::kOnline), 1u);
}

TEST(Fhgs, ScalarProductsOverSmallValues) {
  CounterRng rng(4);
  for (std::int64_t a = -3; a <= 3; ++a)
    for (std::int64_t b = -3; b <= 3; ++b) {
      FixedTensor q(1, 1), k(1, 1);
      q.data[0] = static_cast<Word>(a);
      k.data[0] = static_cast<Word>(b);
      const auto r = run_fhgs_qk(share_of(q, rng), share_of(k, rng), small_opts(static_cast<std::uint64_t>(a * 7 + b + 50)));
      EXPECT_EQ(static_cast<std::int64_t>(open(r.out).data[0]), a * b) << a << " " << b;
    }
}

TEST(Fhgs, RandomScoresExactOverSeeds) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CounterRng rng(1000 + seed);
    const auto q = random_ring(4, 6, rng, kRing);
    const auto k = random_ring(4, 6, rng, kRing);
    const auto r = run_fhgs_qk(share_of(q, rng), share_of(k, rng), small_opts(seed));
    ASSERT_EQ(open(r.out), ring_product(q, ring_transpose(k))) << seed;
    ASSERT_EQ(r.ledger->total().mul_ct_ct, 0u);
  }
}

TEST(AttentionValue, IdentityAndUniformRows) {
  CounterRng rng(5);
  const auto v = random_fixed(4, 6, rng, -2.0, 2.0, kRing);
  const auto r = run_attention_value(share_of(identity(4), rng), share_of(v, rng), small_opts());
  EXPECT_EQ(open(r.out), v);

  FixedTensor uniform(4, 4);
  for (auto& w : uniform.data) w = 1;
  const auto u = open(run_attention_value(share_of(uniform, rng), share_of(v, rng), small_opts()).out);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      Word col = 0;
      for (std::size_t r2 = 0; r2 < 4; ++r2) col += v.at(r2, j);
      EXPECT_EQ(u.at(i, j), col);
    }
}

TEST(Fused, IdentityProjectionsGiveGram) {
  CounterRng rng(6);
  const auto x = random_ring(4, 8, rng, kRing);
  const auto r = run_chgs_block(x, identity(8), FixedTensor(4, 8), identity(8), identity(8), small_opts());
  EXPECT_EQ(open(r.out), ring_product(x, ring_transpose(x)));
  EXPECT_EQ(r.transcript->interaction_count(Phase::kOnline), 1u);
}

TEST(Fused, EmbeddingAndProjections) {
  CounterRng rng(7);
  const auto x = model::one_hot({3, 0, 5, 3}, 8);
  const auto we = random_ring(8, 6, rng, kRing), lam = random_ring(4, 6, rng, kRing);
  const auto wq = random_ring(6, 4, rng, kRing), wk = random_ring(6, 4, rng, kRing);
  const auto r = run_chgs_block(x, we, lam, wq, wk, small_opts());
  const auto x1 = add(ring_product(x, we), lam, kRing);
  EXPECT_EQ(open(r.out), ring_product(ring_product(x1, wq), ring_transpose(ring_product(x1, wk))));
  EXPECT_EQ(r.ledger->total().mul_ct_ct, 0u);
}

model::ModelConfig tiny_config(std::size_t blocks = 2) {
  model::ModelConfig c;
  c.N = blocks;
  c.d_emb = 8;
  c.H = 2;
  c.n = 4;
  c.d_oh = 16;
  c.d_ff = 16;
  c.d_out = 2;
  return c;
}

struct ModelCase {
  model::ModelConfig config;
  model::ModelWeights weights;
  std::vector<std::size_t> tokens;
  FixedTensor reference;
  model::Trace trace;
};

ModelCase make_case(std::size_t blocks, std::uint64_t seed, model::Norm norm = model::Norm::kPost) {
  ModelCase m;
  m.config = tiny_config(blocks);
  m.config.norm = norm;
  CounterRng rng(seed);
  m.weights = model::random_weights(m.config, rng);
  for (std::size_t i = 0; i < m.config.n; ++i) m.tokens.push_back((seed * 5 + i * 3) % m.config.d_oh);
  model::ForwardOptions fo;
  fo.trace = &m.trace;
  m.reference = model::reference_forward(m.config, m.weights, m.tokens, fo);
  return m;
}

class ModeTest : public ::testing::TestWithParam<Mode> {};

TEST_P(ModeTest, MatchesReferenceExactly) {
  const auto m = make_case(2, 11);
  EngineOptions o = small_opts();
  o.mode = GetParam();
  const auto r = run_protocol(m.config, m.weights, m.tokens, o);
  EXPECT_EQ(r.logits, m.reference);
  EXPECT_EQ(r.flagged_rows, 0u);
  EXPECT_EQ(r.ledger->total().mul_ct_ct, 0u);
}

TEST_P(ModeTest, PreNormMatchesReferenceExactly) {
  auto m = make_case(2, 21, model::Norm::kPre);
  EngineOptions o = small_opts();
  o.mode = GetParam();
  const auto r = run_protocol(m.config, m.weights, m.tokens, o);
  EXPECT_EQ(r.logits, m.reference);
  EXPECT_EQ(r.transcript->score_path_interactions(0),
            expected_score_path_interactions(GetParam(), model::Norm::kPre));
  m.trace["onehot"] = model::one_hot(m.tokens, m.config.d_oh);
  m.trace["logits"] = m.reference;
  EXPECT_TRUE(audit_server(r.server, m.trace).ok);
}

TEST_P(ModeTest, ServerAuditPasses) {
  auto m = make_case(1, 12);
  EngineOptions o = small_opts();
  o.mode = GetParam();
  const auto r = run_protocol(m.config, m.weights, m.tokens, o);
  m.trace["onehot"] = model::one_hot(m.tokens, m.config.d_oh);
  m.trace["logits"] = m.reference;
  const auto a = audit_server(r.server, m.trace);
  EXPECT_TRUE(a.ok) << (a.violations.empty() ? "" : a.violations[0]);
  EXPECT_GT(r.server.count(Tag::kMaskedValue), 0u);
}

TEST_P(ModeTest, ScorePathInteractions) {
  const auto m = make_case(1, 13);
  EngineOptions o = small_opts();
  o.mode = GetParam();
  const auto r = run_protocol(m.config, m.weights, m.tokens, o);
  EXPECT_EQ(r.transcript->score_path_interactions(0), GetParam() == Mode::kFPC ? 1u : 4u);
}

TEST_P(ModeTest, OnlineHeOnlyWhereExpected) {
  const auto m = make_case(1, 14);
  EngineOptions o = small_opts();
  o.mode = GetParam();
  const auto r = run_protocol(m.config, m.weights, m.tokens, o);
  for (Step s : {Step::kEmbed, Step::kQKV, Step::kOthers}) {
    const auto n = r.ledger->at(s, Phase::kOnline).he_total();
    if (GetParam() == Mode::kBase)
      EXPECT_GT(n, 0u) << step_name(s);
    else
      EXPECT_EQ(n, 0u) << step_name(s);
  }
  EXPECT_GT(r.transcript->bytes(Phase::kOnline), 0u);
  EXPECT_GT(r.transcript->bytes(Phase::kOffline), 0u);
}

INSTANTIATE_TEST_SUITE_P(AllModes, ModeTest, ::testing::ValuesIn(kAllModes),
                         [](const auto& info) { return std::string(mode_name(info.param)); });

TEST(Protocol, StrategyAndKernelDoNotChangeResult) {
  const auto m = make_case(1, 15);
  for (auto s : {packing::Strategy::kFeaturesFirst, packing::Strategy::kTokensFirst})
    for (auto k : {packing::Kernel::kNaive, packing::Kernel::kLogStep}) {
      EngineOptions o = small_opts();
      o.mode = Mode::kFPC;
      o.strategy = s;
      o.kernel = k;
      if (s == packing::Strategy::kFeaturesFirst && k == packing::Kernel::kLogStep) {
        EXPECT_EQ(code_of([&] { run_protocol(m.config, m.weights, m.tokens, o); }), ErrorCode::kUnsupported);
        continue;
      }
      EXPECT_EQ(run_protocol(m.config, m.weights, m.tokens, o).logits, m.reference);
    }
}

TEST(Protocol, GarbledBackendMatchesSemantic) {
  auto c = tiny_config(1);
  c.n = 2;
  c.d_emb = 4;
  c.d_ff = 4;
  c.d_oh = 8;
  CounterRng rng(16);
  const auto w = model::random_weights(c, rng);
  const std::vector<std::size_t> tokens{1, 6};
  EngineOptions o = small_opts();
  o.mode = Mode::kFPC;
  const auto sem = run_protocol(c, w, tokens, o);
  o.backend = nonpoly::Backend::kGarbled;
  const auto gc = run_protocol(c, w, tokens, o);
  EXPECT_EQ(gc.logits, sem.logits);
  EXPECT_EQ(gc.transcript->total_bytes(), sem.transcript->total_bytes());
}

TEST(Protocol, DeterministicForSeed) {
  const auto m = make_case(1, 17);
  const auto a = run_protocol(m.config, m.weights, m.tokens, small_opts(9));
  const auto b = run_protocol(m.config, m.weights, m.tokens, small_opts(9));
  EXPECT_EQ(a.output.s, b.output.s);
  EXPECT_EQ(a.transcript->total_bytes(), b.transcript->total_bytes());
  std::ostringstream ta, tb;
  write_transcript(ta, *a.transcript);
  write_transcript(tb, *b.transcript);
  EXPECT_EQ(ta.str(), tb.str());
}

TEST(Protocol, WrongTokenCount) {
  const auto m = make_case(1, 18);
  EXPECT_EQ(code_of([&] { run_protocol(m.config, m.weights, {1, 2}, small_opts()); }), ErrorCode::kShapeMismatch);
}

TEST(Session, OnlineWithoutMaterial) {
  Session s(small_opts(), kRing);
  s.begin_offline();
  s.begin_online();
  CounterRng rng(19);
  const auto x = share_of(random_ring(2, 2, rng, kRing), rng);
  EXPECT_EQ(code_of([&] { s.hgs(x, {{identity(2), {}, "Y", Step::kOthers}}, "l", Step::kOthers, 0, false); }),
            ErrorCode::kMissingMaterial);
}

TEST(Latency, SingleInteraction) {
  Transcript t;
  const auto it = t.begin(Step::kOthers, Phase::kOnline, "x");
  t.add(it, Party::kClient, MsgKind::kShare, 1'000'000, Step::kOthers);
  const auto l = estimate_latency(t, ChannelModel{});
  EXPECT_NEAR(l.online_s, 0.0123, 1e-12);
  EXPECT_EQ(l.offline_s, 0.0);
}

TEST(Latency, LinearInInteractionsAndBytes) {
  const ChannelModel ch{};
  const double base = network_seconds(3, 500, ch);
  EXPECT_NEAR(network_seconds(6, 1000, ch), 2 * base, 1e-12);
  EXPECT_NEAR(network_seconds(4, 500, ch) - base, ch.delay_s, 1e-12);
  EXPECT_EQ(code_of([] { estimate_latency(Transcript{}, ChannelModel{0.1, 0.0}); }), ErrorCode::kConfig);
}

}  // namespace
}  // namespace hpi::protocol
