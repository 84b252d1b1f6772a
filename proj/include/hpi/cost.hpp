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

#include <array>
#include <cstdint>
#include <mutex>
#include <string_view>

#include "hpi/error.hpp"

namespace hpi {

enum class Phase : std::uint8_t { kOffline = 0, kOnline = 1 };

/// Report columns of a transformer block.
enum class Step : std::uint8_t { kEmbed = 0, kQKV, kQxK, kSoftMax, kAttenValue, kOthers };

inline constexpr std::size_t kNumSteps = 6;
inline constexpr std::size_t kNumPhases = 2;

inline constexpr std::array<Step, kNumSteps> kAllSteps = {
    Step::kEmbed, Step::kQKV, Step::kQxK, Step::kSoftMax, Step::kAttenValue, Step::kOthers};

inline std::string_view step_name(Step s) {
  switch (s) {
    case Step::kEmbed: return "Embed";
    case Step::kQKV: return "QKV";
    case Step::kQxK: return "QxK";
    case Step::kSoftMax: return "SoftMax";
    case Step::kAttenValue: return "AttenValue";
    case Step::kOthers: return "Others";
  }
  return "?";
}

inline std::string_view phase_name(Phase p) {
  return p == Phase::kOffline ? "offline" : "online";
}

enum class HeOp : std::uint8_t {
  kEncrypt,
  kDecrypt,
  kAdd,
  kAddPlain,
  kMulPlain,
  kRotate,
};

/// Operation tallies for one (step, phase) cell.
struct OpCounts {
  std::uint64_t encrypt = 0;
  std::uint64_t decrypt = 0;
  std::uint64_t add = 0;
  std::uint64_t add_plain = 0;
  std::uint64_t mul_plain = 0;
  std::uint64_t rotate = 0;
  // Always zero: the HE interface has no ciphertext-ciphertext product.
  std::uint64_t mul_ct_ct = 0;
  std::uint64_t gc_and = 0;
  std::uint64_t gc_xor = 0;
  std::uint64_t ot = 0;
  std::uint64_t saturations = 0;

  std::uint64_t he_total() const {
    return encrypt + decrypt + add + add_plain + mul_plain + rotate + mul_ct_ct;
  }

  OpCounts& operator+=(const OpCounts& o) {
    encrypt += o.encrypt;
    decrypt += o.decrypt;
    add += o.add;
    add_plain += o.add_plain;
    mul_plain += o.mul_plain;
    rotate += o.rotate;
    mul_ct_ct += o.mul_ct_ct;
    gc_and += o.gc_and;
    gc_xor += o.gc_xor;
    ot += o.ot;
    saturations += o.saturations;
    return *this;
  }

  friend bool operator==(const OpCounts&, const OpCounts&) = default;
};

/// Per-party operation ledger with a current (step, phase, block) scope.
/// Increments are safe from concurrent threads.
class CostLedger {
 public:
  void set_scope(Step step, Phase phase) {
    std::lock_guard lock(mu_);
    step_ = step;
    phase_ = phase;
  }

  Step step() const {
    std::lock_guard lock(mu_);
    return step_;
  }
  Phase phase() const {
    std::lock_guard lock(mu_);
    return phase_;
  }

  void record(HeOp op, std::uint64_t n = 1) {
    std::lock_guard lock(mu_);
    auto& c = cell(step_, phase_);
    switch (op) {
      case HeOp::kEncrypt: c.encrypt += n; break;
      case HeOp::kDecrypt: c.decrypt += n; break;
      case HeOp::kAdd: c.add += n; break;
      case HeOp::kAddPlain: c.add_plain += n; break;
      case HeOp::kMulPlain: c.mul_plain += n; break;
      case HeOp::kRotate: c.rotate += n; break;
    }
  }

  void record_gc(std::uint64_t and_gates, std::uint64_t xor_gates, std::uint64_t ots) {
    std::lock_guard lock(mu_);
    auto& c = cell(step_, phase_);
    c.gc_and += and_gates;
    c.gc_xor += xor_gates;
    c.ot += ots;
  }

  void record_saturations(std::uint64_t n) {
    std::lock_guard lock(mu_);
    cell(step_, phase_).saturations += n;
  }

  OpCounts at(Step s, Phase p) const {
    std::lock_guard lock(mu_);
    return cells_[static_cast<std::size_t>(s)][static_cast<std::size_t>(p)];
  }

  OpCounts phase_total(Phase p) const {
    OpCounts t;
    for (Step s : kAllSteps) t += at(s, p);
    return t;
  }

  OpCounts total() const {
    OpCounts t = phase_total(Phase::kOffline);
    t += phase_total(Phase::kOnline);
    return t;
  }

  void merge(const CostLedger& other) {
    for (Step s : kAllSteps)
      for (Phase p : {Phase::kOffline, Phase::kOnline}) {
        const OpCounts o = other.at(s, p);
        std::lock_guard lock(mu_);
        cell(s, p) += o;
      }
  }

 private:
  OpCounts& cell(Step s, Phase p) {
    return cells_[static_cast<std::size_t>(s)][static_cast<std::size_t>(p)];
  }

  mutable std::mutex mu_;
  Step step_ = Step::kOthers;
  Phase phase_ = Phase::kOffline;
  std::array<std::array<OpCounts, kNumPhases>, kNumSteps> cells_{};
};

/// Sets a ledger scope for the lifetime of the guard, restoring the old one.
class ScopedStep {
 public:
  ScopedStep(CostLedger& ledger, Step s, Phase p)
      : ledger_(ledger), old_step_(ledger.step()), old_phase_(ledger.phase()) {
    ledger_.set_scope(s, p);
  }
  ~ScopedStep() { ledger_.set_scope(old_step_, old_phase_); }
  ScopedStep(const ScopedStep&) = delete;
  ScopedStep& operator=(const ScopedStep&) = delete;

 private:
  CostLedger& ledger_;
  Step old_step_;
  Phase old_phase_;
};

}  // namespace hpi
