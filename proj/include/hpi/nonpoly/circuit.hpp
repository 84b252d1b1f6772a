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

#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "hpi/error.hpp"

namespace hpi::nonpoly {

enum class GateOp : std::uint8_t { kXor, kAnd, kInv };

struct Gate {
  GateOp op;
  std::uint32_t in0;
  std::uint32_t in1;  // unused for kInv
  std::uint32_t out;
};

inline constexpr std::int64_t kConstZero = -1;
inline constexpr std::int64_t kConstOne = -2;

/// Boolean circuit in topological order. Wires 0..g-1 belong to the
/// garbler, g..g+e-1 to the evaluator, the rest are gate outputs in order.
/// An output is a wire id or one of the two constants.
struct Circuit {
  std::uint32_t garbler_inputs = 0;
  std::uint32_t evaluator_inputs = 0;
  std::uint32_t num_wires = 0;
  std::vector<Gate> gates;
  std::vector<std::int64_t> outputs;

  std::uint32_t num_inputs() const { return garbler_inputs + evaluator_inputs; }

  std::uint64_t count(GateOp op) const {
    std::uint64_t n = 0;
    for (const auto& g : gates) n += g.op == op;
    return n;
  }
  std::uint64_t and_count() const { return count(GateOp::kAnd); }
  std::uint64_t xor_count() const { return count(GateOp::kXor); }
};

/// Bit context that records gates instead of computing. Constant operands
/// are folded, so public tables and constant multipliers cost nothing.
class CircuitBuilder {
 public:
  using Bit = std::int64_t;

  Bit garbler_input() {
    HPI_ENFORCE(c_.gates.empty(), kInternal, "inputs must precede gates");
    HPI_ENFORCE(c_.evaluator_inputs == 0, kInternal, "garbler inputs must precede evaluator inputs");
    ++c_.garbler_inputs;
    return c_.num_wires++;
  }

  Bit evaluator_input() {
    HPI_ENFORCE(c_.gates.empty(), kInternal, "inputs must precede gates");
    ++c_.evaluator_inputs;
    return c_.num_wires++;
  }

  Bit constant(bool v) const { return v ? kConstOne : kConstZero; }
  bool is_zero(Bit a) const { return a == kConstZero; }

  Bit xor_(Bit a, Bit b) {
    if (a == kConstZero) return b;
    if (b == kConstZero) return a;
    if (a == kConstOne) return not_(b);
    if (b == kConstOne) return not_(a);
    if (a == b) return kConstZero;
    return emit(GateOp::kXor, a, b);
  }

  Bit and_(Bit a, Bit b) {
    if (a == kConstZero || b == kConstZero) return kConstZero;
    if (a == kConstOne) return b;
    if (b == kConstOne) return a;
    if (a == b) return a;
    return emit(GateOp::kAnd, a, b);
  }

  Bit not_(Bit a) {
    if (a == kConstZero) return kConstOne;
    if (a == kConstOne) return kConstZero;
    if (auto it = inverse_of_.find(a); it != inverse_of_.end()) return it->second;
    const Bit out = emit(GateOp::kInv, a, a);
    inverse_of_[out] = a;
    inverse_of_[a] = out;
    return out;
  }

  void output(Bit a) { c_.outputs.push_back(a); }

  Circuit finish() && { return std::move(c_); }
  const Circuit& circuit() const { return c_; }

 private:
  Bit emit(GateOp op, Bit a, Bit b) {
    const auto out = c_.num_wires++;
    c_.gates.push_back(Gate{op, static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), out});
    return out;
  }

  Circuit c_;
  std::unordered_map<Bit, Bit> inverse_of_;
};

/// Cleartext evaluation.
inline std::vector<bool> evaluate(const Circuit& c, const std::vector<bool>& garbler,
                                  const std::vector<bool>& evaluator) {
  HPI_ENFORCE(garbler.size() == c.garbler_inputs && evaluator.size() == c.evaluator_inputs,
              kShapeMismatch, "circuit expects ", c.garbler_inputs, "+", c.evaluator_inputs,
              " inputs, got ", garbler.size(), "+", evaluator.size());
  std::vector<bool> w(c.num_wires);
  for (std::size_t i = 0; i < garbler.size(); ++i) w[i] = garbler[i];
  for (std::size_t i = 0; i < evaluator.size(); ++i) w[c.garbler_inputs + i] = evaluator[i];
  for (const auto& g : c.gates) {
    switch (g.op) {
      case GateOp::kXor: w[g.out] = w[g.in0] != w[g.in1]; break;
      case GateOp::kAnd: w[g.out] = w[g.in0] && w[g.in1]; break;
      case GateOp::kInv: w[g.out] = !w[g.in0]; break;
    }
  }
  std::vector<bool> out;
  out.reserve(c.outputs.size());
  for (auto o : c.outputs) out.push_back(o == kConstOne ? true : o == kConstZero ? false : w[o]);
  return out;
}

// ---------------------------------------------------------------------------
// Text form:
//   hpi-circuit 1
//   inputs <garbler> <evaluator>
//   gates <count>
//   <out> XOR|AND <in0> <in1>
//   <out> INV <in0> -
//   outputs <count>
//   <wire | c0 | c1>

inline constexpr int kCircuitFormatVersion = 1;

inline void write_circuit(std::ostream& os, const Circuit& c) {
  os << "hpi-circuit " << kCircuitFormatVersion << "\n";
  os << "inputs " << c.garbler_inputs << " " << c.evaluator_inputs << "\n";
  os << "gates " << c.gates.size() << "\n";
  for (const auto& g : c.gates) {
    switch (g.op) {
      case GateOp::kXor: os << g.out << " XOR " << g.in0 << " " << g.in1 << "\n"; break;
      case GateOp::kAnd: os << g.out << " AND " << g.in0 << " " << g.in1 << "\n"; break;
      case GateOp::kInv: os << g.out << " INV " << g.in0 << " -\n"; break;
    }
  }
  os << "outputs " << c.outputs.size() << "\n";
  for (auto o : c.outputs)
    os << (o == kConstZero ? std::string("c0") : o == kConstOne ? std::string("c1") : std::to_string(o))
       << "\n";
}

inline Circuit read_circuit(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  auto next = [&]() -> std::istringstream {
    HPI_ENFORCE(static_cast<bool>(std::getline(is, line)), kSchema, "circuit text truncated after line ",
                line_no);
    ++line_no;
    return std::istringstream(line);
  };
  auto fail = [&](const char* what) {
    ::hpi::detail::throw_error(ErrorCode::kSchema, "circuit line ", line_no, ": ", what, ": '", line, "'");
  };

  Circuit c;
  {
    auto ls = next();
    std::string magic;
    int version = 0;
    if (!(ls >> magic >> version) || magic != "hpi-circuit") fail("bad header");
    if (version != kCircuitFormatVersion) fail("unsupported version");
  }
  {
    auto ls = next();
    std::string kw;
    if (!(ls >> kw >> c.garbler_inputs >> c.evaluator_inputs) || kw != "inputs") fail("expected inputs");
    c.num_wires = c.num_inputs();
  }
  std::size_t count = 0;
  {
    auto ls = next();
    std::string kw;
    if (!(ls >> kw >> count) || kw != "gates") fail("expected gates");
  }
  c.gates.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto ls = next();
    std::uint32_t out = 0, in0 = 0, in1 = 0;
    std::string op, b;
    if (!(ls >> out >> op >> in0 >> b)) fail("malformed gate");
    if (out != c.num_wires) fail("gate outputs must be numbered consecutively");
    if (in0 >= out) fail("gate input not yet defined");
    GateOp gop = GateOp::kXor;
    if (op == "XOR" || op == "AND") {
      gop = op == "XOR" ? GateOp::kXor : GateOp::kAnd;
      try {
        in1 = static_cast<std::uint32_t>(std::stoul(b));
      } catch (const std::exception&) {
        fail("bad second input");
      }
      if (in1 >= out) fail("gate input not yet defined");
    } else if (op == "INV") {
      if (b != "-") fail("INV takes one input");
      gop = GateOp::kInv;
      in1 = in0;
    } else {
      fail("unknown gate");
    }
    c.gates.push_back(Gate{gop, in0, in1, out});
    ++c.num_wires;
  }
  {
    auto ls = next();
    std::string kw;
    if (!(ls >> kw >> count) || kw != "outputs") fail("expected outputs");
  }
  for (std::size_t i = 0; i < count; ++i) {
    auto ls = next();
    std::string ref;
    if (!(ls >> ref)) fail("missing output");
    if (ref == "c0") {
      c.outputs.push_back(kConstZero);
    } else if (ref == "c1") {
      c.outputs.push_back(kConstOne);
    } else {
      std::int64_t w = -1;
      try {
        w = std::stoll(ref);
      } catch (const std::exception&) {
        fail("bad output reference");
      }
      if (w < 0 || w >= c.num_wires) fail("output wire out of range");
      c.outputs.push_back(w);
    }
  }
  return c;
}

}  // namespace hpi::nonpoly
