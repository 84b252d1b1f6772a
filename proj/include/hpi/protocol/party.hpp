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

#include <map>
#include <string>
#include <vector>

#include "hpi/error.hpp"
#include "hpi/numeric.hpp"
#include "hpi/sharing.hpp"

namespace hpi::protocol {

using sharing::Party;

/// What a stored tensor is, from the holder's point of view.
enum class Tag : std::uint8_t {
  kPlaintextWeight,
  kMask,
  kMaskedValue,
  kCiphertext,
  kShare,
  // The unmasked value of a client-derived tensor. Illegal on the server.
  kLogicalPlaintext,
};

inline const char* tag_name(Tag t) {
  switch (t) {
    case Tag::kPlaintextWeight: return "plaintext-weight";
    case Tag::kMask: return "mask";
    case Tag::kMaskedValue: return "masked-value";
    case Tag::kCiphertext: return "ciphertext";
    case Tag::kShare: return "share";
    case Tag::kLogicalPlaintext: return "logical-plaintext";
  }
  return "?";
}

struct Held {
  Tag tag;
  FixedTensor value;  // empty for ciphertexts
};

/// Everything one party stores during a session, by label.
class PartyState {
 public:
  explicit PartyState(Party role = Party::kClient) : role_(role) {}

  Party role() const { return role_; }

  void hold(const std::string& label, FixedTensor value, Tag tag) {
    HPI_ENFORCE(!(role_ == Party::kServer && tag == Tag::kLogicalPlaintext), kInternal,
                "server asked to store logical plaintext '", label, "'");
    held_[label] = Held{tag, std::move(value)};
  }

  void hold_ciphertext(const std::string& label) { held_[label] = Held{Tag::kCiphertext, {}}; }

  const std::map<std::string, Held>& held() const { return held_; }

  std::size_t count(Tag t) const {
    std::size_t n = 0;
    for (const auto& [k, v] : held_) n += v.tag == t;
    return n;
  }

 private:
  Party role_;
  std::map<std::string, Held> held_;
};

struct AuditResult {
  bool ok = true;
  std::vector<std::string> violations;
};

/// Server-ignorance audit. Fails if the server holds anything tagged
/// logical-plaintext, or any stored tensor equals one of the given logical
/// (unmasked) client-derived tensors.
inline AuditResult audit_server(const PartyState& server,
                                const std::map<std::string, FixedTensor>& logical = {}) {
  AuditResult r;
  auto fail = [&](std::string v) {
    r.ok = false;
    r.violations.push_back(std::move(v));
  };
  if (server.role() != Party::kServer) fail("audited state does not belong to the server");
  for (const auto& [label, h] : server.held()) {
    if (h.tag == Tag::kLogicalPlaintext) fail(label + " is tagged logical-plaintext");
    if (h.tag == Tag::kPlaintextWeight || h.value.size() == 0) continue;
    for (const auto& [name, t] : logical) {
      if (t.size() == 0 || !t.same_shape(h.value)) continue;
      bool all_zero = true;
      for (Word w : t.data) all_zero = all_zero && w == 0;
      if (!all_zero && t == h.value) fail(label + " equals logical tensor " + name);
    }
  }
  return r;
}

}  // namespace hpi::protocol
