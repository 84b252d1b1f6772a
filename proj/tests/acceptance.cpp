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

// Acceptance suite: one PASS/FAIL line per criterion, exit code 1 if any fails.

#include <boost/math/distributions/chi_squared.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "hpi/protocol/engine.hpp"

namespace {

using namespace hpi;
using protocol::Mode;

struct Outcome {
  bool ok = true;
  std::string detail;
};

int g_failed = 0;

void report(int id, const char* name, const Outcome& o) {
  std::printf("%s [%d] %s: %s\n", o.ok ? "PASS" : "FAIL", id, name, o.detail.c_str());
  std::fflush(stdout);
  g_failed += o.ok ? 0 : 1;
}

Outcome guarded(const std::function<Outcome()>& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

// Server audits of every protocol run below, checked together in criterion 8.
std::size_t g_audits = 0;
std::vector<std::string> g_audit_failures;

struct Case {
  model::ModelConfig config;
  model::ModelWeights weights;
  std::vector<std::size_t> tokens;
  FixedTensor reference;
  model::Trace trace;
};

Case make_case(std::size_t N, std::size_t d, std::size_t H, std::size_t n, model::Activation act,
               std::uint64_t seed) {
  Case c;
  c.config.N = N;
  c.config.d_emb = d;
  c.config.H = H;
  c.config.n = n;
  c.config.d_oh = 32;
  c.config.d_ff = 2 * d;
  c.config.activation = act;
  CounterRng rng(seed);
  c.weights = model::random_weights(c.config, rng);
  for (std::size_t i = 0; i < n; ++i) c.tokens.push_back(static_cast<std::size_t>(rng() % c.config.d_oh));
  model::ForwardOptions fo;
  fo.trace = &c.trace;
  c.reference = model::reference_forward(c.config, c.weights, c.tokens, fo);
  c.trace["onehot"] = model::one_hot(c.tokens, c.config.d_oh);
  c.trace["logits"] = c.reference;
  return c;
}

protocol::RunResult run(const Case& c, Mode m, nonpoly::Backend backend, std::uint64_t seed) {
  protocol::EngineOptions o;
  o.mode = m;
  o.backend = backend;
  o.seed = seed;
  auto r = protocol::run_protocol(c.config, c.weights, c.tokens, o);
  const auto a = protocol::audit_server(r.server, c.trace);
  ++g_audits;
  if (!a.ok)
    g_audit_failures.push_back(std::string(protocol::mode_name(m)) + ": " + a.violations.front());
  return r;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1 -------------------------------------------------------------------------
Outcome end_to_end() {
  const auto start = std::chrono::steady_clock::now();
  std::size_t runs = 0, exact = 0;
  std::uint64_t seed = 100;
  for (std::size_t N : {1, 2})
    for (std::size_t d : {8, 16})
      for (std::size_t H : {1, 2})
        for (std::size_t n : {4, 8}) {
          const auto act = (N + d + H + n) % 2 ? model::Activation::kGelu : model::Activation::kRelu;
          const auto c = make_case(N, d, H, n, act, ++seed);
          for (Mode m : protocol::kAllModes) {
            ++runs;
            exact += run(c, m, nonpoly::Backend::kSemantic, seed).logits == c.reference;
          }
        }
  // Garbled circuits on the smallest and the largest grid point.
  double worst = 0;
  std::size_t gc_runs = 0;
  const auto small = make_case(1, 8, 2, 4, model::Activation::kRelu, 900);
  const auto large = make_case(2, 16, 2, 8, model::Activation::kGelu, 901);
  auto gc_check = [&](const Case& c, Mode m) {
    const auto r = run(c, m, nonpoly::Backend::kGarbled, 77);
    const auto got = model::decode_logits(c.config, r.logits), ref = model::decode_logits(c.config, c.reference);
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::fabs(got[i] - ref[i]));
    ++gc_runs;
  };
  for (Mode m : protocol::kAllModes) gc_check(small, m);
  gc_check(large, Mode::kFPC);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double tol = std::ldexp(1.0, -4);
  std::ostringstream os;
  os << exact << "/" << runs << " semantic runs bit-exact; " << gc_runs << " garbled runs max |dlogit| "
     << fmt("%.3g", worst) << " (tol 2^-4); " << fmt("%.1f", secs) << " s (limit 300)";
  return {exact == runs && worst <= tol && secs <= 300, os.str()};
}

// 2 -------------------------------------------------------------------------
Outcome fhgs_identity() {
  const RingParams p{};
  std::size_t ok = 0;
  std::uint64_t ct_ct = 0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    CounterRng rng(5000 + t);
    const auto q = random_ring(4, 6, rng, p), k = random_ring(4, 6, rng, p);
    auto share = [&](const FixedTensor& x) {
      const auto [c, s] = sharing::share(x, rng, p);
      return protocol::Shared{c.value, s.value, false};
    };
    protocol::EngineOptions o;
    o.seed = t;
    const auto r = protocol::run_fhgs_qk(share(q), share(k), o);
    // Independent oracle: schoolbook Q K^T with wrap-around.
    FixedTensor expect(4, 4);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        Word acc = 0;
        for (std::size_t x = 0; x < 6; ++x) acc += q.at(i, x) * k.at(j, x);
        expect.at(i, j) = acc;
      }
    ok += add(r.out.c, r.out.s, p) == expect;
    ct_ct += r.ledger->total().mul_ct_ct;
  }
  return {ok == 100 && ct_ct == 0,
          std::to_string(ok) + "/100 trials exact; " + std::to_string(ct_ct) + " ciphertext products"};
}

// 3 and 4 share runs --------------------------------------------------------
struct ModeRuns {
  std::map<Mode, protocol::RunResult> runs;
};

const ModeRuns& mode_runs() {
  static const ModeRuns r = [] {
    ModeRuns m;
    const auto c = make_case(2, 16, 2, 8, model::Activation::kGelu, 300);
    for (Mode mode : protocol::kAllModes) m.runs.emplace(mode, run(c, mode, nonpoly::Backend::kSemantic, 3));
    return m;
  }();
  return r;
}

Outcome offline_online_split() {
  bool ok = true;
  std::ostringstream os;
  for (const auto& [mode, r] : mode_runs().runs) {
    std::uint64_t he = 0;
    for (Step s : {Step::kEmbed, Step::kQKV, Step::kOthers}) he += r.ledger->at(s, Phase::kOnline).he_total();
    ok = ok && (mode == Mode::kBase ? he > 0 : he == 0);
    os << protocol::mode_name(mode) << "=" << he << " ";
  }
  return {ok, "online HE ops in Embed+QKV+Others: " + os.str() + "(expect >0 for base, 0 otherwise)"};
}

Outcome interaction_reduction() {
  const auto f = mode_runs().runs.at(Mode::kF).transcript->score_path_interactions(0);
  const auto fpc = mode_runs().runs.at(Mode::kFPC).transcript->score_path_interactions(0);
  return {f == 4 && fpc == 1, "Embed->QKV->QxK online interactions: f=" + std::to_string(f) +
                                  " (expect 4), fpc=" + std::to_string(fpc) + " (expect 1)"};
}

// 5 -------------------------------------------------------------------------
Outcome rotation_accounting() {
  bool ok = true;
  std::ostringstream os;
  for (auto [M, n] : {std::pair<std::size_t, std::size_t>{16, 4}, {64, 8}, {4096, 32}}) {
    const std::size_t d = 2 * M / n;  // two ciphertexts
    CounterRng rng(M + n);
    const auto x = random_ring(n, d, rng), w = random_ring(d, 1, rng);
    std::uint64_t rot[2] = {0, 0};
    std::size_t c = 0;
    for (auto s : {packing::Strategy::kFeaturesFirst, packing::Strategy::kTokensFirst}) {
      CostLedger ledger;
      he::HeParams hp;
      hp.slots = M;
      he::Evaluator ev(hp, &ledger);
      const auto kp = ev.keygen();
      const auto l = packing::make_layout(s, n, d, M);
      c = l.c;
      const auto enc = packing::pack(ev, x, l, kp.pub);
      const auto before = ledger.total().rotate;
      const auto y = packing::he_matmul(ev, enc, w, packing::Kernel::kNaive);
      ok = ok && packing::unpack(ev, y, kp.sec) == mat_mul(x, w);
      rot[static_cast<int>(s)] = ledger.total().rotate - before;
    }
    const std::uint64_t want_ff = c * M, want_tf = c * ((M + n - 1) / n);
    const std::uint64_t saving = rot[0] - rot[1], predicted = c * (M - M / n);
    ok = ok && rot[0] == want_ff && rot[1] == want_tf && (saving > predicted ? saving - predicted : predicted - saving) <= c;
    os << "(M=" << M << ",n=" << n << ") ff=" << rot[0] << "/" << want_ff << " tf=" << rot[1] << "/" << want_tf
       << " saving=" << saving << "/" << predicted << "; ";
  }
  auto text = os.str();
  text.resize(text.size() - 2);
  return {ok, text};
}

// 6 -------------------------------------------------------------------------
Outcome secure_fn_accuracy() {
  using namespace nonpoly;
  const RingParams p{};
  SecureFnSpec spec;
  spec.fn = Fn::kSoftmaxRow;
  spec.cols = 8;
  const std::size_t rows = 1000;
  CounterRng rng(6);
  FixedTensor x(rows, spec.cols);
  for (auto& w : x.data) w = p.from_signed(std::llround(std::ldexp(rng.uniform(-8.0, 8.0), 8)));
  const auto [c, s] = sharing::share(x, rng, p);
  const auto mask = random_ring(rows, spec.cols, rng, p);
  const auto r = eval_secure(spec, std::vector{c.value}, std::vector{s.value}, mask, Backend::kSemantic);
  const auto y = add(r.server, r.client, p);
  double worst = 0, worst_sum = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    double m = -1e9, z = 0, sum = 0;
    for (std::size_t j = 0; j < spec.cols; ++j) m = std::max(m, fx_decode(x.at(i, j), p, 8));
    for (std::size_t j = 0; j < spec.cols; ++j) z += std::exp(fx_decode(x.at(i, j), p, 8) - m);
    for (std::size_t j = 0; j < spec.cols; ++j) {
      const double got = fx_decode(y.at(i, j), p, 8);
      worst = std::max(worst, std::fabs(got - std::exp(fx_decode(x.at(i, j), p, 8) - m) / z));
      sum += got;
    }
    worst_sum = std::max(worst_sum, std::fabs(sum - 1.0));
  }

  // Garbled against semantic at 16-bit words, every function.
  std::size_t agree = 0, total = 0;
  RingParams p16;
  p16.modulus_bits = 16;
  for (Fn fn : {Fn::kIdentity, Fn::kRelu, Fn::kGelu, Fn::kSoftmaxRow, Fn::kReciprocal, Fn::kExpApprox,
                Fn::kMaxReduce, Fn::kLayerNormRow, Fn::kAddLayerNormRow}) {
    SecureFnSpec s16;
    s16.fn = fn;
    s16.word_bits = 16;
    s16.cols = 4;
    s16.in_shifts.assign(static_cast<std::size_t>(fn_arity(fn)), 0);
    double lo = -8, hi = 8;
    if (fn == Fn::kReciprocal) lo = 0.5, hi = 64;
    if (fn == Fn::kExpApprox) lo = -16, hi = 0;
    if (fn == Fn::kLayerNormRow || fn == Fn::kAddLayerNormRow) lo = -4, hi = 4;
    std::vector<FixedTensor> cs, ss;
    for (int k = 0; k < fn_arity(fn); ++k) {
      FixedTensor v(20, s16.cols);
      for (auto& w : v.data) w = p16.from_signed(std::llround(std::ldexp(rng.uniform(lo, hi), 8)));
      const auto [a, b] = sharing::share(v, rng, p16);
      cs.push_back(a.value);
      ss.push_back(b.value);
    }
    const auto m16 = random_ring(20, s16.out_cols(), rng, p16);
    const auto sem = eval_secure(s16, cs, ss, m16, Backend::kSemantic);
    const auto gc = eval_secure(s16, cs, ss, m16, Backend::kGarbled);
    agree += sem.server == gc.server && sem.client == gc.client;
    ++total;
  }
  const double tol = std::ldexp(1.0, -5);
  std::ostringstream os;
  os << "softmax max |err| " << fmt("%.4g", worst) << " (tol 2^-5), max |row sum - 1| " << fmt("%.4g", worst_sum)
     << " (tol " << tol * 8 << "); garbled==semantic at 16 bits for " << agree << "/" << total << " functions";
  return {worst <= tol && worst_sum <= tol * 8 && agree == total, os.str()};
}

// 7 -------------------------------------------------------------------------
Outcome masking_uniformity() {
  RingParams p8;
  p8.modulus_bits = 8;
  const std::size_t samples = 100000;
  const boost::math::chi_squared dist(255);
  double worst_p = 1;
  for (std::int64_t v : {0, 37, -1}) {
    FixedTensor x(1, samples);
    for (auto& w : x.data) w = p8.from_signed(v);
    CounterRng rng(700 + static_cast<std::uint64_t>(v + 1));
    // The client's masked upload: value minus a fresh client mask.
    const auto [client_mask, msg] = sharing::share(x, rng, p8);
    std::vector<double> hist(256, 0);
    for (Word w : msg.value.data) hist[w] += 1;
    const double expect = static_cast<double>(samples) / 256;
    double chi = 0;
    for (double h : hist) chi += (h - expect) * (h - expect) / expect;
    worst_p = std::min(worst_p, boost::math::cdf(boost::math::complement(dist, chi)));
  }
  return {worst_p > 0.01, "min chi-square p-value over 3 inputs " + fmt("%.4f", worst_p) + " (need > 0.01)"};
}

// 8 -------------------------------------------------------------------------
Outcome audit_all() {
  return {g_audits > 0 && g_audit_failures.empty(),
          std::to_string(g_audits - g_audit_failures.size()) + "/" + std::to_string(g_audits) +
              " protocol runs passed the server audit" +
              (g_audit_failures.empty() ? "" : "; first violation: " + g_audit_failures.front())};
}

// 9 -------------------------------------------------------------------------
Outcome latency_sanity() {
  const protocol::ChannelModel ch{0.0023, 1e8};
  protocol::Transcript t;
  const auto it = t.begin(Step::kOthers, Phase::kOnline, "one");
  t.add(it, protocol::Party::kClient, protocol::MsgKind::kShare, 1'000'000, Step::kOthers);
  const auto l = protocol::estimate_latency(t, ch);
  bool linear = true;
  for (std::size_t k : {1, 2, 5, 40})
    for (std::uint64_t b : {0ull, 1000ull, 1'000'000ull}) {
      const double base = protocol::network_seconds(k, b, ch);
      linear = linear && std::fabs(protocol::network_seconds(2 * k, 2 * b, ch) - 2 * base) < 1e-12 &&
               std::fabs(protocol::network_seconds(k + 1, b, ch) - base - ch.delay_s) < 1e-12 &&
               std::fabs(protocol::network_seconds(k, b + 1000, ch) - base - 1e-5) < 1e-12;
    }
  return {std::fabs(l.online_s - 0.0123) < 1e-15 && l.offline_s == 0 && linear,
          "1 interaction, 1 MB -> " + fmt("%.10f", l.online_s) + " s (expect 0.0123); linear " +
              (linear ? "yes" : "no")};
}

}  // namespace

int main() {
  report(1, "end-to-end equivalence", guarded(end_to_end));
  report(2, "matrix-triple score identity", guarded(fhgs_identity));
  report(3, "offline/online split", guarded(offline_online_split));
  report(4, "interaction reduction", guarded(interaction_reduction));
  report(5, "rotation accounting", guarded(rotation_accounting));
  report(6, "secure function accuracy", guarded(secure_fn_accuracy));
  report(7, "masking uniformity", guarded(masking_uniformity));
  report(8, "server-ignorance audit", guarded(audit_all));
  report(9, "modeled latency", guarded(latency_sanity));
  std::printf("%d of 9 criteria failed\n", g_failed);
  return g_failed == 0 ? 0 : 1;
}
