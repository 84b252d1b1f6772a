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

#include <atomic>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hpi/cost.hpp"
#include "hpi/error.hpp"
#include "hpi/he.hpp"
#include "hpi/model.hpp"
#include "hpi/nonpoly/secure_eval.hpp"
#include "hpi/packing.hpp"
#include "hpi/protocol/party.hpp"
#include "hpi/protocol/transcript.hpp"
#include "hpi/sharing.hpp"

// Client/server protocol over additive shares of the model's activations.
//
// Modes:
//   base  every linear layer and share product runs on ciphertexts online
//   f     plaintext-weight layers use precomputed masked products (one masked
//         upload online, no HE), share products use HE-generated matrix triples
//   fp    f with tokens-first packing
//   fpc   fp with the embedding, query/key projections and the score product
//         fused into one exchange per block
// Non-linear steps run as garbled circuits in every mode.
//
// A run makes two passes over the same forward schedule. The offline pass
// sees only shapes, masks and weights and queues the material of every
// step; the online pass consumes it in order.

namespace hpi::protocol {

enum class Mode : std::uint8_t { kBase, kF, kFP, kFPC };

inline constexpr std::array<Mode, 4> kAllModes = {Mode::kBase, Mode::kF, Mode::kFP, Mode::kFPC};

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::kBase: return "base";
    case Mode::kF: return "f";
    case Mode::kFP: return "fp";
    case Mode::kFPC: return "fpc";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  for (Mode m : kAllModes)
    if (s == mode_name(m)) return m;
  ::hpi::detail::throw_error(ErrorCode::kConfig, "unknown mode '", s, "' (base|f|fp|fpc)");
}

inline packing::Strategy default_strategy(Mode m) {
  return (m == Mode::kFP || m == Mode::kFPC) ? packing::Strategy::kTokensFirst
                                             : packing::Strategy::kFeaturesFirst;
}

struct EngineOptions {
  Mode mode = Mode::kF;
  std::optional<packing::Strategy> strategy;  // unset: from the mode
  packing::Kernel kernel = packing::Kernel::kNaive;
  he::HeParams he{256, RingParams{}, std::size_t{1} << 18, he::NoiseModel{}};
  nonpoly::Backend backend = nonpoly::Backend::kSemantic;
  nonpoly::RangePolicy policy = nonpoly::RangePolicy::kPermissive;
  std::uint64_t seed = 1;

  packing::Strategy packing() const { return strategy.value_or(default_strategy(mode)); }

  void validate() const {
    HPI_ENFORCE(kernel == packing::Kernel::kNaive || packing() == packing::Strategy::kTokensFirst,
                kUnsupported, "log-step kernel requires tokens-first packing");
    he.validate();
  }
};

/// Additive shares of one logical tensor. `c` lives with the client, `s`
/// with the server. When `masked` is set, `c` is a uniform mask the client
/// chose, so the server's part is the value minus that mask.
struct Shared {
  FixedTensor c;
  FixedTensor s;
  bool masked = false;

  std::size_t rows() const { return c.rows; }
  std::size_t cols() const { return c.cols; }
};

inline std::atomic<std::uint64_t>& session_counter() {
  static std::atomic<std::uint64_t> c{1};
  return c;
}

/// A linear layer Y = P W + b over the masked input of an upload.
struct Linear {
  FixedTensor W;
  FixedTensor b;  // empty: no bias
  std::string label;
  Step step = Step::kOthers;
};

class Session {
 public:
  enum class Pass : std::uint8_t { kOffline, kOnline };

  Session(const EngineOptions& opt, RingParams ring)
      : opt_(opt),
        ring_(ring),
        id_(session_counter().fetch_add(1)),
        transcript_(std::make_shared<Transcript>()),
        ledger_(std::make_shared<CostLedger>()),
        ev_(make_params(opt, ring), ledger_.get()),
        client_(Party::kClient),
        server_(Party::kServer),
        client_rng_(CounterRng(opt.seed).fork(1)),
        server_rng_(CounterRng(opt.seed).fork(2)) {
    opt_.validate();
  }

  Pass pass() const { return pass_; }
  bool offline() const { return pass_ == Pass::kOffline; }
  const EngineOptions& options() const { return opt_; }
  const RingParams& ring() const { return ring_; }
  std::uint64_t id() const { return id_; }
  std::shared_ptr<Transcript> transcript() const { return transcript_; }
  std::shared_ptr<CostLedger> ledger() const { return ledger_; }
  const PartyState& client() const { return client_; }
  const PartyState& server() const { return server_; }
  std::size_t flagged_rows() const { return flagged_; }
  const he::Evaluator& evaluator() const { return ev_; }

  /// Runs `schedule` once per pass and returns the online result.
  template <class F>
  auto two_pass(F&& schedule) {
    begin_offline();
    schedule(*this);
    begin_online();
    auto out = schedule(*this);
    finish();
    return out;
  }

  void begin_offline() {
    pass_ = Pass::kOffline;
    keygen();
  }

  void begin_online() {
    HPI_ENFORCE(pass_ == Pass::kOffline, kInternal, "online pass without offline pass");
    pass_ = Pass::kOnline;
  }

  void finish() {
    HPI_ENFORCE(hgs_.empty() && fhgs_.empty() && gc_.empty() && chgs_.empty(), kInternal,
                "offline material left unused");
  }

  // ---------------------------------------------------------------------
  // Linear layers

  /// Masked upload plus precomputed masked products: the server computes
  /// (X - Rc) W + b - Rs, the client holds Rc W + Rs from the offline phase.
  /// All layers share one upload.
  std::vector<Shared> hgs(const Shared& x, const std::vector<Linear>& layers, const std::string& label,
                          Step step, std::size_t block, bool score_path) {
    if (offline()) {
      HgsMaterial m = prepare_hgs(x, layers, label, step, x.masked ? &x.c : nullptr);
      std::vector<Shared> out;
      for (const auto& l : layers) out.push_back(dummy(x.rows(), l.W.cols));
      hgs_.push_back(std::move(m));
      return out;
    }
    HgsMaterial m = take(hgs_, "masked-product");
    const auto u = masked_input(x, m.rc, label, step, block, score_path);
    std::vector<Shared> out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      FixedTensor ys = mat_mul(u, l.W, ring_);
      if (l.b.size() != 0) ys = add(ys, l.b, ring_);
      ys = sub(ys, m.rs[i], ring_);
      server_.hold(label + "." + l.label + ".share", ys, Tag::kShare);
      client_.hold(label + "." + l.label + ".share", m.client[i], Tag::kShare);
      out.push_back({m.client[i], std::move(ys), false});
    }
    return out;
  }

  /// Online ciphertext layer: the client encrypts its share, the server
  /// multiplies, adds its own part and returns Enc(Y - Rs).
  Shared he_linear(const Shared& x, const Linear& l, const std::string& label, std::size_t block,
                   bool score_path) {
    if (offline()) return dummy(x.rows(), l.W.cols);
    const auto it = transcript_->begin(l.step, Phase::kOnline, label, block, score_path);
    ScopedStep scope(*ledger_, l.step, Phase::kOnline);
    const auto enc = encrypt(x.c, label + ".x");
    send_ct(it, Party::kClient, enc, l.step, label + ".x");
    auto r = packing::he_matmul(ev_, enc, l.W, opt_.kernel);
    FixedTensor plain = mat_mul(x.s, l.W, ring_);
    if (l.b.size() != 0) plain = add(plain, l.b, ring_);
    const FixedTensor rs = random_ring(x.rows(), l.W.cols, server_rng_, ring_);
    r = packing::add_plain(ev_, r, sub(plain, rs, ring_));
    server_.hold(label + ".share", rs, Tag::kShare);
    send_ct(it, Party::kServer, r, l.step, label + ".y");
    const auto yc = packing::unpack(ev_, r, keys_.sec);
    client_.hold(label + ".share", yc, Tag::kShare);
    return {yc, rs, false};
  }

  Shared linear(const Shared& x, const Linear& l, const std::string& label, std::size_t block,
                bool score_path = false) {
    if (opt_.mode == Mode::kBase) return he_linear(x, l, label, block, score_path);
    return hgs(x, {l}, label, l.step, block, score_path)[0];
  }

  // ---------------------------------------------------------------------
  // Products of two shared matrices

  /// Batched x[i] * y[i] with matrix triples: the server sees x - L and
  /// y - R, adds Enc(L)(y - R) + (x - L)Enc(R) + Enc(LR) to the plaintext
  /// cross product and returns the sum minus its fresh share. With `gram`,
  /// R = L^T (so y = K^T is masked by the transpose of x's mask).
  std::vector<Shared> fhgs(const std::vector<Shared>& xs, const std::vector<Shared>& ys,
                           const std::string& label, Step step, std::size_t block, bool score_path,
                           bool gram) {
    HPI_ENFORCE(xs.size() == ys.size() && !xs.empty(), kShapeMismatch, "product batch sizes differ");
    if (offline()) {
      FhgsMaterial m;
      m.session = id_;
      ScopedStep scope(*ledger_, step, Phase::kOffline);
      const auto it = transcript_->begin(step, Phase::kOffline, label + ".triples", block);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        HPI_ENFORCE(xs[i].cols() == ys[i].rows(), kShapeMismatch, "product of ", xs[i].rows(), "x",
                    xs[i].cols(), " and ", ys[i].rows(), "x", ys[i].cols());
        FixedTensor l = random_ring(xs[i].rows(), xs[i].cols(), client_rng_, ring_);
        FixedTensor r = gram ? transpose(l) : random_ring(ys[i].rows(), ys[i].cols(), client_rng_, ring_);
        auto t = sharing::gen_triple_from(ev_, keys_.pub, std::move(l), std::move(r), opt_.packing(),
                                          server_rng_);
        for (const auto* e : {&t.enc_left, &t.enc_right, &t.enc_product})
          send_ct(it, Party::kClient, *e, step, label + ".triple");
        client_.hold(label + ".L" + std::to_string(i), t.left, Tag::kMask);
        client_.hold(label + ".R" + std::to_string(i), t.right, Tag::kMask);
        server_.hold_ciphertext(label + ".triple" + std::to_string(i));
        m.triples.push_back(std::move(t));
      }
      fhgs_.push_back(std::move(m));
      std::vector<Shared> out;
      for (std::size_t i = 0; i < xs.size(); ++i) out.push_back(dummy(xs[i].rows(), ys[i].cols()));
      return out;
    }
    FhgsMaterial m = take(fhgs_, "triple");
    HPI_ENFORCE(m.triples.size() == xs.size(), kMissingMaterial, "triple batch does not match");
    const auto it = transcript_->begin(step, Phase::kOnline, label, block, score_path);
    ScopedStep scope(*ledger_, step, Phase::kOnline);
    std::vector<packing::EncMatrix> replies;
    std::vector<Shared> out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      auto& t = m.triples[i];
      registry_.consume(t.id);
      const std::string tag = label + "." + std::to_string(i);
      const auto dx = sub(xs[i].c, t.left, ring_), dy = sub(ys[i].c, t.right, ring_);
      send_share(it, Party::kClient, dx, step, tag + ".x");
      send_share(it, Party::kClient, dy, step, tag + ".y");
      const auto xm = add(xs[i].s, dx, ring_), ym = add(ys[i].s, dy, ring_);
      server_.hold(tag + ".x-L", xm, Tag::kMaskedValue);
      server_.hold(tag + ".y-R", ym, Tag::kMaskedValue);
      const auto tmp1 = mat_mul(xm, ym, ring_);
      auto tmp = packing::add(ev_, packing::he_matmul(ev_, t.enc_left, ym, opt_.kernel),
                              packing::he_left_matmul(ev_, xm, t.enc_right));
      tmp = packing::add(ev_, tmp, t.enc_product);
      tmp = packing::add_plain(ev_, tmp, sub(tmp1, t.rs_next, ring_));
      server_.hold(tag + ".share", t.rs_next, Tag::kShare);
      send_ct(it, Party::kServer, tmp, step, tag + ".result");
      const auto zc = packing::unpack(ev_, tmp, keys_.sec);
      client_.hold(tag + ".share", zc, Tag::kShare);
      out.push_back({zc, t.rs_next, false});
    }
    return out;
  }

  /// Base-mode product: ciphertexts of the client's shares, cross terms on
  /// the server, no offline material.
  std::vector<Shared> he_product(const std::vector<Shared>& xs, const std::vector<Shared>& ys,
                                 const std::string& label, Step step, std::size_t block,
                                 bool score_path) {
    HPI_ENFORCE(xs.size() == ys.size() && !xs.empty(), kShapeMismatch, "product batch sizes differ");
    std::vector<Shared> out;
    if (offline()) {
      for (std::size_t i = 0; i < xs.size(); ++i) out.push_back(dummy(xs[i].rows(), ys[i].cols()));
      return out;
    }
    const auto it = transcript_->begin(step, Phase::kOnline, label, block, score_path);
    ScopedStep scope(*ledger_, step, Phase::kOnline);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const std::string tag = label + "." + std::to_string(i);
      const auto ex = encrypt(xs[i].c, tag + ".x"), ey = encrypt(ys[i].c, tag + ".y");
      send_ct(it, Party::kClient, ex, step, tag + ".x");
      send_ct(it, Party::kClient, ey, step, tag + ".y");
      auto t = packing::add(ev_, packing::he_matmul(ev_, ex, ys[i].s, opt_.kernel),
                            packing::he_left_matmul(ev_, xs[i].s, ey));
      const FixedTensor rs = random_ring(xs[i].rows(), ys[i].cols(), server_rng_, ring_);
      t = packing::add_plain(ev_, t, sub(mat_mul(xs[i].s, ys[i].s, ring_), rs, ring_));
      server_.hold(tag + ".share", rs, Tag::kShare);
      send_ct(it, Party::kServer, t, step, tag + ".result");
      const auto zc = add(packing::unpack(ev_, t, keys_.sec), mat_mul(xs[i].c, ys[i].c, ring_), ring_);
      client_.hold(tag + ".share", zc, Tag::kShare);
      out.push_back({zc, rs, false});
    }
    return out;
  }

  std::vector<Shared> product(const std::vector<Shared>& xs, const std::vector<Shared>& ys,
                              const std::string& label, Step step, std::size_t block, bool score_path,
                              bool gram) {
    if (opt_.mode == Mode::kBase) return he_product(xs, ys, label, step, block, score_path);
    return fhgs(xs, ys, label, step, block, score_path, gram);
  }

  // ---------------------------------------------------------------------
  // Fused block prefix

  struct FusedOut {
    std::vector<Shared> side;    // one per side layer
    std::vector<Shared> scores;  // one per head
  };

  /// With P = U A + c0 + Rc A for the masked input U = Z - Rc, returns shares
  /// of P B_h P^T for every head plus the side layers P W + b, in a single
  /// exchange. The Rc W_M Rc^T terms (W_M = A B_h A^T) come from one extra
  /// offline round. `a` empty means the identity.
  FusedOut fused(const Shared& z, const FixedTensor& a, const FixedTensor& c0,
                 const std::vector<FixedTensor>& bs, const std::vector<Linear>& side,
                 const std::string& label, Step first_step, std::size_t block) {
    const std::size_t n = z.rows();
    const FixedTensor A = a.size() != 0 ? a : identity(z.cols());
    if (offline()) {
      ChgsMaterial m;
      m.session = id_;
      m.rc = z.masked ? z.c : random_ring(n, z.cols(), client_rng_, ring_);
      client_.hold(label + ".Rc", m.rc, Tag::kMask);
      const auto it1 = transcript_->begin(first_step, Phase::kOffline, label + ".round1", block);
      const auto it2 = transcript_->begin(Step::kQxK, Phase::kOffline, label + ".round2", block);
      {
        ScopedStep scope(*ledger_, first_step, Phase::kOffline);
        m.enc_rc = encrypt(m.rc, label + ".Rc");
        m.enc_rct = encrypt(transpose(m.rc), label + ".RcT");
        send_ct(it1, Party::kClient, m.enc_rc, first_step, label + ".Rc");
        send_ct(it1, Party::kClient, m.enc_rct, first_step, label + ".RcT");
        server_.hold_ciphertext(label + ".Rc");
        for (const auto& l : side) {
          const FixedTensor w = mat_mul(A, l.W, ring_);
          auto [cw, rs] = masked_product(it1, m.enc_rc, w, label + "." + l.label, l.step);
          m.side_client.push_back(std::move(cw));
          m.side_rs.push_back(std::move(rs));
        }
      }
      ScopedStep scope(*ledger_, Step::kQxK, Phase::kOffline);
      for (std::size_t h = 0; h < bs.size(); ++h) {
        const FixedTensor wm = mat_mul(mat_mul(A, bs[h], ring_), transpose(A), ring_);
        auto [dm, rsm] = masked_product(it1, m.enc_rc, wm, label + ".WM" + std::to_string(h), Step::kQxK);
        const auto enc_d = encrypt(mat_mul(dm, transpose(m.rc), ring_), label + ".RcWMRcT");
        send_ct(it2, Party::kClient, enc_d, Step::kQxK, label + ".RcWMRcT" + std::to_string(h));
        m.rc_wm_rct.push_back(packing::add(ev_, enc_d, packing::he_left_matmul(ev_, neg(rsm, ring_), m.enc_rct)));
      }
      chgs_.push_back(std::move(m));
      FusedOut out;
      for (const auto& l : side) out.side.push_back(dummy(n, l.W.cols));
      for (std::size_t h = 0; h < bs.size(); ++h) out.scores.push_back(dummy(n, n));
      return out;
    }

    ChgsMaterial m = take(chgs_, "fused-prefix");
    HPI_ENFORCE(m.rc_wm_rct.size() == bs.size() && m.side_client.size() == side.size(), kMissingMaterial,
                "fused material does not match the block");
    const auto it = transcript_->begin(first_step, Phase::kOnline, label, block, true);
    FixedTensor u;
    if (z.masked) {
      HPI_ENFORCE(z.c == m.rc, kMissingMaterial, "input mask differs from the offline mask");
      u = z.s;
    } else {
      const auto du = sub(z.c, m.rc, ring_);
      send_share(it, Party::kClient, du, first_step, label + ".upload");
      u = add(z.s, du, ring_);
    }
    server_.hold(label + ".U", u, Tag::kMaskedValue);
    FusedOut out;
    for (std::size_t i = 0; i < side.size(); ++i) {
      const auto& l = side[i];
      ScopedStep scope(*ledger_, l.step, Phase::kOnline);
      FixedTensor ys = mat_mul(u, mat_mul(A, l.W, ring_), ring_);
      if (l.b.size() != 0) ys = add(ys, l.b, ring_);
      ys = sub(ys, m.side_rs[i], ring_);
      server_.hold(label + "." + l.label + ".share", ys, Tag::kShare);
      client_.hold(label + "." + l.label + ".share", m.side_client[i], Tag::kShare);
      out.side.push_back({m.side_client[i], std::move(ys), false});
    }
    ScopedStep scope(*ledger_, Step::kQxK, Phase::kOnline);
    FixedTensor ps = mat_mul(u, A, ring_);
    if (c0.size() != 0) ps = add(ps, c0, ring_);
    server_.hold(label + ".Ps", ps, Tag::kMaskedValue);
    for (std::size_t h = 0; h < bs.size(); ++h) {
      const auto psb = mat_mul(ps, bs[h], ring_);
      const auto tmp1 = mat_mul(psb, transpose(ps), ring_);
      auto acc = packing::he_matmul(ev_, m.enc_rc, mat_mul(mat_mul(A, bs[h], ring_), transpose(ps), ring_),
                                    opt_.kernel);
      acc = packing::add(ev_, acc, packing::he_left_matmul(ev_, mat_mul(psb, transpose(A), ring_), m.enc_rct));
      acc = packing::add(ev_, acc, m.rc_wm_rct[h]);
      const FixedTensor rs = random_ring(n, n, server_rng_, ring_);
      acc = packing::add_plain(ev_, acc, sub(tmp1, rs, ring_));
      const std::string tag = label + ".S" + std::to_string(h);
      server_.hold(tag + ".share", rs, Tag::kShare);
      send_ct(it, Party::kServer, acc, Step::kQxK, tag);
      const auto sc = packing::unpack(ev_, acc, keys_.sec);
      client_.hold(tag + ".share", sc, Tag::kShare);
      out.scores.push_back({sc, rs, false});
    }
    return out;
  }

  // ---------------------------------------------------------------------
  // Non-linear steps

  /// Row-wise F on shares. The client's output share is a fresh mask, or
  /// `mask` when given.
  Shared nonlinear(const nonpoly::SecureFnSpec& spec, const std::vector<Shared>& in,
                   const std::string& label, Step step, std::size_t block, bool score_path = false) {
    const std::size_t rows = in.at(0).rows();
    const auto circuit = nonpoly::row_circuit(spec);
    const auto cost = nonpoly::gc_cost(*circuit, rows);
    const auto setup = nonpoly::ot_traffic(cost.ot_count).sender_setup;
    if (offline()) {
      GcMaterial m;
      m.session = id_;
      m.mask = random_ring(rows, spec.out_cols(), client_rng_, ring_);
      client_.hold(label + ".mask", m.mask, Tag::kMask);
      const auto it = transcript_->begin(step, Phase::kOffline, label + ".garble", block);
      {
        ScopedStep scope(*ledger_, step, Phase::kOffline);
        ledger_->record_gc(cost.and_gates, cost.xor_gates, 0);
      }
      transcript_->add(it, Party::kClient, MsgKind::kGcMaterial, cost.material_bytes, step, label + ".tables");
      if (setup > 0) transcript_->add(it, Party::kClient, MsgKind::kOt, setup, step, label + ".ot-setup");
      Shared out{m.mask, FixedTensor(rows, spec.out_cols()), true};
      gc_.push_back(std::move(m));
      return out;
    }
    GcMaterial m = take(gc_, "garbled-circuit");
    std::vector<FixedTensor> cs, ss;
    for (const auto& x : in) {
      cs.push_back(x.c);
      ss.push_back(x.s);
    }
    const auto r = nonpoly::eval_secure(spec, cs, ss, m.mask, opt_.backend, opt_.policy);
    HPI_ENFORCE(r.cost == cost, kInternal, "secure evaluation cost differs from its plan");
    flagged_ += r.flagged_rows;
    const auto it = transcript_->begin(step, Phase::kOnline, label, block, score_path);
    {
      ScopedStep scope(*ledger_, step, Phase::kOnline);
      ledger_->record_gc(cost.and_gates, cost.xor_gates, cost.ot_count);
      ledger_->record_saturations(r.flagged_rows);
    }
    if (cost.ot_receiver_bytes > 0)
      transcript_->add(it, Party::kServer, MsgKind::kOt, cost.ot_receiver_bytes, step, label + ".ot-choose");
    transcript_->add(it, Party::kClient, MsgKind::kGcMaterial, cost.label_bytes, step, label + ".labels");
    if (cost.ot_sender_bytes > setup)
      transcript_->add(it, Party::kClient, MsgKind::kOt, cost.ot_sender_bytes - setup, step, label + ".ot-transfer");
    server_.hold(label + ".share", r.server, Tag::kMaskedValue);
    return {m.mask, r.server, true};
  }

  /// Share-local sum.
  Shared add_local(const Shared& a, const Shared& b) const {
    return {add(a.c, b.c, ring_), add(a.s, b.s, ring_), false};
  }

  /// Share-local multiplication by a public constant.
  Shared scale_local(const Shared& x, Word k) const {
    return {scale(x.c, k, ring_), scale(x.s, k, ring_), false};
  }

  /// The server sends its share; the client reconstructs.
  FixedTensor reveal_to_client(const Shared& x, const std::string& label, Step step, std::size_t block) {
    if (offline()) return FixedTensor(x.rows(), x.cols());
    const auto it = transcript_->begin(step, Phase::kOnline, label, block);
    send_share(it, Party::kServer, x.s, step, label);
    const auto y = add(x.c, x.s, ring_);
    client_.hold(label, y, Tag::kLogicalPlaintext);
    return y;
  }

 private:
  struct HgsMaterial {
    std::uint64_t session = 0;
    FixedTensor rc;
    std::vector<FixedTensor> client;  // Rc W + Rs
    std::vector<FixedTensor> rs;      // server
  };
  struct FhgsMaterial {
    std::uint64_t session = 0;
    std::vector<sharing::MatTriple> triples;
  };
  struct ChgsMaterial {
    std::uint64_t session = 0;
    FixedTensor rc;
    packing::EncMatrix enc_rc, enc_rct;
    std::vector<FixedTensor> side_client, side_rs;
    std::vector<packing::EncMatrix> rc_wm_rct;
  };
  struct GcMaterial {
    std::uint64_t session = 0;
    FixedTensor mask;
  };

  static he::HeParams make_params(const EngineOptions& opt, const RingParams& ring) {
    he::HeParams p = opt.he;
    p.ring = ring;
    return p;
  }

  void keygen() {
    if (have_keys_) return;
    keys_ = ev_.keygen();
    have_keys_ = true;
    const auto it = transcript_->begin(Step::kEmbed, Phase::kOffline, "keys");
    transcript_->add(it, Party::kClient, MsgKind::kCiphertext, opt_.he.ciphertext_bytes, Step::kEmbed,
                     "public-key");
  }

  template <class M>
  M take(std::deque<M>& q, const char* what) {
    HPI_ENFORCE(!q.empty(), kMissingMaterial, "no offline ", what, " material left");
    M m = std::move(q.front());
    q.pop_front();
    HPI_ENFORCE(m.session == id_, kMissingMaterial, what, " material belongs to session ", m.session);
    return m;
  }

  Shared dummy(std::size_t r, std::size_t c) const { return {FixedTensor(r, c), FixedTensor(r, c), false}; }

  packing::EncMatrix encrypt(const FixedTensor& x, const std::string&) {
    return packing::pack(ev_, x, packing::make_layout(opt_.packing(), x.rows, x.cols, ev_.slots()),
                         keys_.pub);
  }

  void send_ct(std::size_t it, Party from, const packing::EncMatrix& m, Step step, const std::string& label) {
    transcript_->add(it, from, MsgKind::kCiphertext, m.cts.size() * opt_.he.ciphertext_bytes, step, label);
  }

  void send_share(std::size_t it, Party from, const FixedTensor& x, Step step, const std::string& label) {
    const std::uint64_t word_bytes = static_cast<std::uint64_t>((ring_.modulus_bits + 7) / 8);
    transcript_->add(it, from, MsgKind::kShare, std::max<std::uint64_t>(1, x.size() * word_bytes), step, label);
  }

  /// Offline: the server turns Enc(Rc) into Enc(Rc W + Rs) and returns it;
  /// the client decrypts. Returns (client part, server's Rs).
  std::pair<FixedTensor, FixedTensor> masked_product(std::size_t it, const packing::EncMatrix& enc_rc,
                                                     const FixedTensor& w, const std::string& label, Step step) {
    const FixedTensor rs = random_ring(enc_rc.rows(), w.cols, server_rng_, ring_);
    const auto e = packing::add_plain(ev_, packing::he_matmul(ev_, enc_rc, w, opt_.kernel), rs);
    server_.hold(label + ".Rs", rs, Tag::kShare);
    send_ct(it, Party::kServer, e, step, label + ".RcW");
    auto cw = packing::unpack(ev_, e, keys_.sec);
    client_.hold(label + ".RcW+Rs", cw, Tag::kShare);
    return {std::move(cw), rs};
  }

  HgsMaterial prepare_hgs(const Shared& x, const std::vector<Linear>& layers, const std::string& label,
                          Step step, const FixedTensor* mask) {
    HgsMaterial m;
    m.session = id_;
    m.rc = mask ? *mask : random_ring(x.rows(), x.cols(), client_rng_, ring_);
    client_.hold(label + ".Rc", m.rc, Tag::kMask);
    ScopedStep scope(*ledger_, step, Phase::kOffline);
    const auto it = transcript_->begin(step, Phase::kOffline, label + ".precompute");
    const auto enc = encrypt(m.rc, label + ".Rc");
    send_ct(it, Party::kClient, enc, step, label + ".Rc");
    server_.hold_ciphertext(label + ".Rc");
    for (const auto& l : layers) {
      HPI_ENFORCE(l.W.rows == x.cols(), kShapeMismatch, label, ": input ", x.rows(), "x", x.cols(),
                  " against weight ", l.W.rows, "x", l.W.cols);
      auto [cw, rs] = masked_product(it, enc, l.W, label + "." + l.label, step);
      m.client.push_back(std::move(cw));
      m.rs.push_back(std::move(rs));
    }
    return m;
  }

  /// Gives the server X - Rc: a masked upload of the client's share, or
  /// nothing when the client's share already is that mask.
  FixedTensor masked_input(const Shared& x, const FixedTensor& rc, const std::string& label, Step step,
                           std::size_t block, bool score_path) {
    FixedTensor u;
    if (x.masked && x.c == rc) {
      u = x.s;
    } else {
      const auto it = transcript_->begin(step, Phase::kOnline, label, block, score_path);
      const auto du = sub(x.c, rc, ring_);
      send_share(it, Party::kClient, du, step, label + ".upload");
      u = add(x.s, du, ring_);
    }
    server_.hold(label + ".X-Rc", u, Tag::kMaskedValue);
    return u;
  }

  EngineOptions opt_;
  RingParams ring_;
  std::uint64_t id_;
  std::shared_ptr<Transcript> transcript_;
  std::shared_ptr<CostLedger> ledger_;
  he::Evaluator ev_;
  he::KeyPair keys_{};
  bool have_keys_ = false;
  PartyState client_, server_;
  CounterRng client_rng_, server_rng_;
  sharing::TripleRegistry registry_;
  std::deque<HgsMaterial> hgs_;
  std::deque<FhgsMaterial> fhgs_;
  std::deque<GcMaterial> gc_;
  std::deque<ChgsMaterial> chgs_;
  Pass pass_ = Pass::kOffline;
  std::size_t flagged_ = 0;
};

// ---------------------------------------------------------------------------
// Full inference

struct RunResult {
  FixedTensor logits;  // reconstructed by the client, 2f fractional bits
  Shared output;
  std::shared_ptr<Transcript> transcript;
  std::shared_ptr<CostLedger> ledger;
  PartyState client{Party::kClient};
  PartyState server{Party::kServer};
  std::size_t flagged_rows = 0;
  std::uint64_t session = 0;

  Latency latency(const ChannelModel& ch = {}, const OpCostTable& table = {}) const {
    return estimate_latency(*transcript, ch, ledger.get(), table);
  }
};

namespace detail {

inline std::vector<Shared> split_cols(const Shared& x, std::size_t parts) {
  const std::size_t w = x.cols() / parts;
  std::vector<Shared> out;
  for (std::size_t h = 0; h < parts; ++h)
    out.push_back({col_slice(x.c, h * w, w), col_slice(x.s, h * w, w), false});
  return out;
}

inline Shared transpose_shared(const Shared& x) { return {transpose(x.c), transpose(x.s), false}; }

inline Shared vstack(const std::vector<Shared>& xs) {
  const std::size_t cols = xs.at(0).cols();
  std::size_t rows = 0;
  for (const auto& x : xs) rows += x.rows();
  Shared out{FixedTensor(rows, cols), FixedTensor(rows, cols), xs[0].masked};
  std::size_t r0 = 0;
  for (const auto& x : xs) {
    std::copy(x.c.data.begin(), x.c.data.end(), out.c.data.begin() + static_cast<std::ptrdiff_t>(r0 * cols));
    std::copy(x.s.data.begin(), x.s.data.end(), out.s.data.begin() + static_cast<std::ptrdiff_t>(r0 * cols));
    r0 += x.rows();
  }
  return out;
}

inline std::vector<Shared> vsplit(const Shared& x, std::size_t parts) {
  const std::size_t rows = x.rows() / parts, cols = x.cols();
  std::vector<Shared> out;
  for (std::size_t p = 0; p < parts; ++p) {
    Shared s{FixedTensor(rows, cols), FixedTensor(rows, cols), x.masked};
    const auto off = static_cast<std::ptrdiff_t>(p * rows * cols);
    std::copy(x.c.data.begin() + off, x.c.data.begin() + off + static_cast<std::ptrdiff_t>(rows * cols), s.c.data.begin());
    std::copy(x.s.data.begin() + off, x.s.data.begin() + off + static_cast<std::ptrdiff_t>(rows * cols), s.s.data.begin());
    out.push_back(std::move(s));
  }
  return out;
}

inline Shared hconcat_shared(const std::vector<Shared>& xs) {
  std::vector<FixedTensor> cs, ss;
  for (const auto& x : xs) {
    cs.push_back(x.c);
    ss.push_back(x.s);
  }
  return {hconcat(cs), hconcat(ss), false};
}

/// W_Q,h W_K,h^T for every head.
inline std::vector<FixedTensor> score_weights(const model::ModelConfig& c, const model::BlockWeights& b) {
  std::vector<FixedTensor> out;
  const std::size_t dh = c.d_head();
  for (std::size_t h = 0; h < c.H; ++h)
    out.push_back(mat_mul(col_slice(b.W_Q, h * dh, dh), transpose(col_slice(b.W_K, h * dh, dh)), c.ring));
  return out;
}

}  // namespace detail

/// Online interactions on the chain from the input to the first score
/// product of block 0.
inline std::size_t expected_score_path_interactions(Mode m, model::Norm norm) {
  if (norm == model::Norm::kPost) return m == Mode::kFPC ? 1 : 4;
  // Pre-norm puts a layer norm between the embedding and the projections:
  // embedding, norm, then the score exchange; base mode also uploads for Q and K.
  return m == Mode::kBase ? 5 : 3;
}

/// The forward schedule shared by both passes.
inline Shared forward_schedule(Session& s, const model::ModelConfig& c, const model::ModelWeights& w,
                               const FixedTensor& onehot) {
  using detail::hconcat_shared;
  using detail::split_cols;
  using detail::transpose_shared;
  const auto& p = c.ring;
  const Mode mode = s.options().mode;
  const bool fused = mode == Mode::kFPC;
  const bool pre = c.norm == model::Norm::kPre;
  const FixedTensor table = model::embedding_table(c, w);
  const Word eta = model::attention_scale(c);

  // The client owns the whole input; the server's share is zero.
  const Shared x0{onehot, FixedTensor(onehot.rows, onehot.cols), false};
  Shared x;
  // Fusing the embedding needs the block input to be the embedding itself.
  const bool fuse_embedding = fused && !pre;
  if (!fuse_embedding) x = s.linear(x0, {table, w.lambda, "X1", Step::kEmbed}, "embed", 0, true);
  for (std::size_t b = 0; b < c.N; ++b) {
    const auto& blk = w.blocks[b];
    const std::string pfx = "block" + std::to_string(b) + ".";
    const Shared u = pre ? s.nonlinear(model::specs::layer_norm(c), {x}, pfx + "norm0", Step::kOthers, b, b == 0) : x;
    Shared v;
    std::vector<Shared> scores;
    if (fused) {
      const bool first = b == 0 && fuse_embedding;
      std::vector<Linear> side;
      if (first) {
        side.push_back({FixedTensor(identity(c.d_emb)), w.lambda, "X1", Step::kEmbed});
        side.push_back({blk.W_V, mat_mul(w.lambda, blk.W_V, p), "V", Step::kQKV});
      } else {
        side.push_back({blk.W_V, {}, "V", Step::kQKV});
      }
      const auto out = s.fused(first ? x0 : u, first ? table : FixedTensor{}, first ? w.lambda : FixedTensor{},
                               detail::score_weights(c, blk), side, pfx + "prefix",
                               first ? Step::kEmbed : Step::kQKV, b);
      if (first) x = out.side[0];
      v = out.side.back();
      scores = out.scores;
    } else {
      const auto q = s.linear(u, {blk.W_Q, {}, "Q", Step::kQKV}, pfx + "Q", b, true);
      const auto k = s.linear(u, {blk.W_K, {}, "K", Step::kQKV}, pfx + "K", b, true);
      v = s.linear(u, {blk.W_V, {}, "V", Step::kQKV}, pfx + "V", b, false);
      std::vector<Shared> kts;
      for (const auto& kh : split_cols(k, c.H)) kts.push_back(transpose_shared(kh));
      scores = s.product(split_cols(q, c.H), kts, pfx + "QxK", Step::kQxK, b, true, true);
    }
    std::vector<Shared> scaled;
    for (const auto& sh : scores) scaled.push_back(s.scale_local(sh, eta));
    const auto att = detail::vsplit(
        s.nonlinear(model::specs::softmax(c), {detail::vstack(scaled)}, pfx + "softmax", Step::kSoftMax, b), c.H);
    const auto heads = s.product(att, split_cols(v, c.H), pfx + "AV", Step::kAttenValue, b, false, false);
    const auto o = s.nonlinear(model::specs::rescale_attention(c), {hconcat_shared(heads)}, pfx + "rescale",
                               Step::kOthers, b);
    const auto y = s.linear(o, {blk.W_O, {}, "Y", Step::kOthers}, pfx + "WO", b);
    Shared z, zn;
    if (pre) {
      z = s.add_local(x, s.nonlinear(model::specs::rescale(c), {y}, pfx + "residual1", Step::kOthers, b));
      zn = s.nonlinear(model::specs::layer_norm(c), {z}, pfx + "norm1", Step::kOthers, b);
    } else {
      z = zn = s.nonlinear(model::specs::add_norm(c), {y, x}, pfx + "norm1", Step::kOthers, b);
    }
    const auto f1 = s.linear(zn, {blk.W_1, {}, "F1", Step::kOthers}, pfx + "W1", b);
    const auto hd = s.nonlinear(model::specs::activation(c), {f1}, pfx + "act", Step::kOthers, b);
    const auto f2 = s.linear(hd, {blk.W_2, {}, "F2", Step::kOthers}, pfx + "W2", b);
    if (pre)
      x = s.add_local(z, s.nonlinear(model::specs::rescale(c), {f2}, pfx + "residual2", Step::kOthers, b));
    else
      x = s.nonlinear(model::specs::add_norm(c), {f2, z}, pfx + "norm2", Step::kOthers, b);
  }
  if (pre) x = s.nonlinear(model::specs::layer_norm(c), {x}, "final-norm", Step::kOthers, c.N - 1);
  return s.linear(x, {w.W_out, {}, "logits", Step::kOthers}, "head", c.N - 1);
}

inline RunResult run_protocol(const model::ModelConfig& c, const model::ModelWeights& w,
                              const std::vector<std::size_t>& tokens, const EngineOptions& opt) {
  c.validate();
  model::check_weights(c, w);
  HPI_ENFORCE(tokens.size() == c.n, kShapeMismatch, tokens.size(), " tokens, expected ", c.n);
  const FixedTensor onehot = model::one_hot(tokens, c.d_oh);
  Session s(opt, c.ring);
  s.begin_offline();
  forward_schedule(s, c, w, FixedTensor(onehot.rows, onehot.cols));
  s.begin_online();
  RunResult r;
  r.output = forward_schedule(s, c, w, onehot);
  r.logits = s.reveal_to_client(r.output, "logits", Step::kOthers, c.N - 1);
  s.finish();
  r.transcript = s.transcript();
  r.ledger = s.ledger();
  r.client = s.client();
  r.server = s.server();
  r.flagged_rows = s.flagged_rows();
  r.session = s.id();
  HPI_ENFORCE(opt.policy == nonpoly::RangePolicy::kPermissive || r.flagged_rows == 0, kRangeViolation,
              r.flagged_rows, " rows left the representable range");
  return r;
}

// ---------------------------------------------------------------------------
// Single primitives, each in its own session

struct PrimitiveRun {
  Shared out;
  std::shared_ptr<Transcript> transcript;
  std::shared_ptr<CostLedger> ledger;
  PartyState server{Party::kServer};
};

template <class F>
PrimitiveRun run_primitive(const EngineOptions& opt, const RingParams& ring, F&& schedule) {
  Session s(opt, ring);
  PrimitiveRun r;
  r.out = s.two_pass(std::forward<F>(schedule));
  r.transcript = s.transcript();
  r.ledger = s.ledger();
  r.server = s.server();
  return r;
}

/// X W on shares with precomputed masked products.
inline PrimitiveRun run_hgs_layer(const Shared& x, const FixedTensor& w, EngineOptions opt = {}) {
  opt.mode = Mode::kF;
  return run_primitive(opt, opt.he.ring, [&](Session& s) {
    return s.hgs(x, {{w, {}, "Y", Step::kOthers}}, "layer", Step::kOthers, 0, false)[0];
  });
}

/// X_Q X_K^T on shares with one matrix triple.
inline PrimitiveRun run_fhgs_qk(const Shared& q, const Shared& k, EngineOptions opt = {}) {
  opt.mode = Mode::kF;
  return run_primitive(opt, opt.he.ring, [&](Session& s) {
    return s.fhgs({q}, {detail::transpose_shared(k)}, "QxK", Step::kQxK, 0, true, true)[0];
  });
}

/// A X_V on shares with one matrix triple.
inline PrimitiveRun run_attention_value(const Shared& a, const Shared& v, EngineOptions opt = {}) {
  opt.mode = Mode::kF;
  return run_primitive(opt, opt.he.ring, [&](Session& s) {
    return s.fhgs({a}, {v}, "AV", Step::kAttenValue, 0, false, false)[0];
  });
}

/// Shares of ((X W_E delta + lambda) W_Q)((X W_E delta + lambda) W_K)^T for
/// a one-hot (or any client-held) X, in one online exchange.
inline PrimitiveRun run_chgs_block(const FixedTensor& x, const FixedTensor& w_e_delta,
                                   const FixedTensor& lambda, const FixedTensor& w_q,
                                   const FixedTensor& w_k, EngineOptions opt = {}) {
  opt.mode = Mode::kFPC;
  const FixedTensor b = mat_mul(w_q, transpose(w_k), opt.he.ring);
  return run_primitive(opt, opt.he.ring, [&](Session& s) {
    const Shared in{x, FixedTensor(x.rows, x.cols), false};
    return s.fused(in, w_e_delta, lambda, {b}, {}, "prefix", Step::kEmbed, 0).scores[0];
  });
}

}  // namespace hpi::protocol
