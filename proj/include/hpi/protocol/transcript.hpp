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

#include <mutex>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hpi/cost.hpp"
#include "hpi/error.hpp"
#include "hpi/sharing.hpp"

namespace hpi::protocol {

using sharing::Party;

enum class MsgKind : std::uint8_t { kCiphertext, kShare, kGcMaterial, kOt };

inline const char* kind_name(MsgKind k) {
  switch (k) {
    case MsgKind::kCiphertext: return "ciphertext";
    case MsgKind::kShare: return "share";
    case MsgKind::kGcMaterial: return "gc_material";
    case MsgKind::kOt: return "ot";
  }
  return "?";
}

struct Message {
  Party sender = Party::kClient;
  Phase phase = Phase::kOnline;
  MsgKind kind = MsgKind::kShare;
  std::uint64_t bytes = 0;
  Step step = Step::kOthers;
  std::size_t interaction = 0;
  std::string label;
};

/// One client<->server round trip.
struct Interaction {
  Step step = Step::kOthers;
  Phase phase = Phase::kOnline;
  std::size_t block = 0;
  // Part of the chain that feeds the first attention product of a block
  // (embedding, query, key projections and the score product).
  bool score_path = false;
  std::string label;
};

/// Ordered, phase- and step-tagged record of every message. Thread-safe.
class Transcript {
 public:
  std::size_t begin(Step step, Phase phase, std::string label, std::size_t block = 0,
                    bool score_path = false) {
    std::lock_guard lock(mu_);
    interactions_.push_back({step, phase, block, score_path, std::move(label)});
    return interactions_.size() - 1;
  }

  void add(std::size_t interaction, Party sender, MsgKind kind, std::uint64_t bytes, Step step,
           std::string label = {}) {
    std::lock_guard lock(mu_);
    HPI_ENFORCE(interaction < interactions_.size(), kInternal, "message outside any interaction");
    HPI_ENFORCE(bytes > 0, kInternal, "empty message ", label);
    messages_.push_back(
        {sender, interactions_[interaction].phase, kind, bytes, step, interaction, std::move(label)});
  }

  std::vector<Message> messages() const {
    std::lock_guard lock(mu_);
    return messages_;
  }
  std::vector<Interaction> interactions() const {
    std::lock_guard lock(mu_);
    return interactions_;
  }

  /// Interactions that carried at least one message, by the step they began in.
  std::size_t interaction_count(Step step, Phase phase) const {
    std::size_t n = 0;
    for (const auto& it : used()) n += it.step == step && it.phase == phase;
    return n;
  }

  std::size_t interaction_count(Phase phase) const {
    std::size_t n = 0;
    for (const auto& it : used()) n += it.phase == phase;
    return n;
  }

  std::size_t score_path_interactions(std::size_t block) const {
    std::size_t n = 0;
    for (const auto& it : used()) n += it.phase == Phase::kOnline && it.block == block && it.score_path;
    return n;
  }

  std::uint64_t bytes(Phase phase) const {
    std::lock_guard lock(mu_);
    std::uint64_t b = 0;
    for (const auto& m : messages_) b += m.phase == phase ? m.bytes : 0;
    return b;
  }

  std::uint64_t bytes(Step step, Phase phase) const {
    std::lock_guard lock(mu_);
    std::uint64_t b = 0;
    for (const auto& m : messages_) b += (m.phase == phase && m.step == step) ? m.bytes : 0;
    return b;
  }

  std::uint64_t total_bytes() const { return bytes(Phase::kOffline) + bytes(Phase::kOnline); }

 private:
  std::vector<Interaction> used() const {
    std::lock_guard lock(mu_);
    std::vector<bool> seen(interactions_.size(), false);
    for (const auto& m : messages_) seen[m.interaction] = true;
    std::vector<Interaction> out;
    for (std::size_t i = 0; i < seen.size(); ++i)
      if (seen[i]) out.push_back(interactions_[i]);
    return out;
  }

  mutable std::mutex mu_;
  std::vector<Interaction> interactions_;
  std::vector<Message> messages_;
};

/// One JSON object per line: step, phase, kind, bytes, plus sender,
/// interaction index and label.
inline void write_transcript(std::ostream& os, const Transcript& t) {
  for (const auto& m : t.messages()) {
    nlohmann::json j{{"step", step_name(m.step)},       {"phase", phase_name(m.phase)},
                     {"kind", kind_name(m.kind)},       {"bytes", m.bytes},
                     {"sender", sharing::party_name(m.sender)}, {"interaction", m.interaction},
                     {"label", m.label}};
    os << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Modeled latency

struct ChannelModel {
  double delay_s = 0.0023;
  double bandwidth_Bps = 1e8;

  void validate() const {
    HPI_ENFORCE(delay_s >= 0 && bandwidth_Bps > 0, kConfig,
                "channel delay must be >= 0 and bandwidth > 0");
  }
};

/// Modeled seconds per operation.
struct OpCostTable {
  double encrypt = 2e-3;
  double decrypt = 1e-3;
  double add = 2e-5;
  double add_plain = 2e-5;
  double mul_plain = 1e-3;
  double rotate = 2e-3;
  double gc_and = 2e-7;
  double gc_xor = 0.0;
  double ot = 5e-5;

  static OpCostTable zero() { return {0, 0, 0, 0, 0, 0, 0, 0, 0}; }

  double seconds(const OpCounts& c) const {
    return encrypt * static_cast<double>(c.encrypt) + decrypt * static_cast<double>(c.decrypt) +
           add * static_cast<double>(c.add) + add_plain * static_cast<double>(c.add_plain) +
           mul_plain * static_cast<double>(c.mul_plain) + rotate * static_cast<double>(c.rotate) +
           gc_and * static_cast<double>(c.gc_and) + gc_xor * static_cast<double>(c.gc_xor) +
           ot * static_cast<double>(c.ot);
  }
};

struct Latency {
  double offline_s = 0;
  double online_s = 0;
  double total() const { return offline_s + online_s; }
};

/// Sum of per-operation costs plus, per interaction, one delay and the
/// transfer time of its bytes.
inline double network_seconds(std::size_t interactions, std::uint64_t bytes, const ChannelModel& ch) {
  return static_cast<double>(interactions) * ch.delay_s + static_cast<double>(bytes) / ch.bandwidth_Bps;
}

inline Latency estimate_latency(const Transcript& t, const ChannelModel& ch, const CostLedger* ops = nullptr,
                                const OpCostTable& table = {}) {
  ch.validate();
  Latency l;
  for (Phase p : {Phase::kOffline, Phase::kOnline}) {
    double s = network_seconds(t.interaction_count(p), t.bytes(p), ch);
    if (ops) s += table.seconds(ops->phase_total(p));
    (p == Phase::kOffline ? l.offline_s : l.online_s) = s;
  }
  return l;
}

}  // namespace hpi::protocol
