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

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hpi/model.hpp"
#include "hpi/packing.hpp"
#include "hpi/protocol/engine.hpp"

// Driver behind the hpi_bench tool: a key = value config schema, reports
// and the run / compare / verify / plan commands.
//
// Config schema (one "key = value" per line, '#' starts a comment):
//   seed = <u64>                         required
//   mode = base | f | fp | fpc           default f
//   packing.strategy = features_first | tokens_first
//                                        default from the mode
//   packing.kernel = naive | log_step    default naive
//   he.slots = <power of two>            default 256
//   he.ciphertext_bytes = <u64>          default 262144
//   channel.delay_s = <double>           default 0.0023
//   channel.bandwidth_Bps = <double>     default 1e8
//   range = strict | permissive          default permissive
//   backend = semantic | garbled         default semantic
//   report = <path>                      structured report output
//   model = <path>                       JSON model config; relative to the file
//   weights = <path>                     weight file; random weights from seed if absent
//   model.N, model.d_emb, model.H, model.n, model.d_oh, model.d_ff, model.d_out,
//   model.activation (relu|gelu), model.norm (post|pre), model.delta
//   tokens = <i>,<i>,...                 default derived from seed

namespace hpi::cli {

struct RunConfig {
  std::string model_path;
  std::string weights_path;
  protocol::Mode mode = protocol::Mode::kF;
  std::optional<packing::Strategy> strategy;
  packing::Kernel kernel = packing::Kernel::kNaive;
  std::size_t he_slots = 256;
  std::size_t ciphertext_bytes = std::size_t{1} << 18;
  protocol::ChannelModel channel{};
  std::optional<std::uint64_t> seed;
  std::string report_path;
  bool strict = false;
  nonpoly::Backend backend = nonpoly::Backend::kSemantic;
  model::ModelConfig model{};
  std::vector<std::size_t> tokens;

  std::uint64_t require_seed() const {
    HPI_ENFORCE(seed.has_value(), kConfig, "field 'seed': missing (a seed is required)");
    return *seed;
  }

  protocol::EngineOptions engine() const {
    protocol::EngineOptions o;
    o.mode = mode;
    o.strategy = strategy;
    o.kernel = kernel;
    o.he.slots = he_slots;
    o.he.ciphertext_bytes = ciphertext_bytes;
    o.backend = backend;
    o.policy = strict ? nonpoly::RangePolicy::kStrict : nonpoly::RangePolicy::kPermissive;
    o.seed = require_seed();
    return o;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& v, const std::string& where) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  HPI_ENFORCE(ec == std::errc{} && p == v.data() + v.size(), kConfig, where, ": '", v, "' is not a valid number");
  return out;
}

inline double parse_double(const std::string& v, const std::string& where) {
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  HPI_ENFORCE(used == v.size() && !v.empty() && std::isfinite(d), kConfig, where, ": '", v,
              "' is not a valid number");
  return d;
}

inline std::string dir_of(const std::string& path) {
  const auto s = path.find_last_of('/');
  return s == std::string::npos ? std::string{} : path.substr(0, s + 1);
}

inline std::string resolve(const std::string& base_dir, const std::string& p) {
  return (p.empty() || p[0] == '/' || base_dir.empty()) ? p : base_dir + p;
}

/// Rethrows any error with a "where:" prefix.
template <class F>
auto at_field(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    std::string msg = e.what();
    if (msg.find(where) != std::string::npos) throw;
    const std::string code = std::string(error_code_name(e.code())) + ": ";
    if (msg.rfind(code, 0) == 0) msg.erase(0, code.size());
    throw Error(ErrorCode::kConfig, where + ": " + msg);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, where + ": " + e.what());
  }
}

}  // namespace detail

/// Parses config text. `origin` names the source in diagnostics and anchors
/// relative paths.
inline RunConfig parse_config(const std::string& text, const std::string& origin = "<config>") {
  RunConfig cfg;
  const std::string base = detail::dir_of(origin);
  std::set<std::string> seen;
  std::map<std::string, std::pair<std::string, std::string>> model_keys;  // key -> (value, where)
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string at = origin + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    HPI_ENFORCE(eq != std::string::npos, kConfig, at, ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const std::string where = at + ": field '" + key + "'";
    HPI_ENFORCE(!key.empty(), kConfig, at, ": empty key");
    HPI_ENFORCE(!value.empty(), kConfig, where, ": empty value");
    HPI_ENFORCE(seen.insert(key).second, kConfig, where, ": duplicate key");
    detail::at_field(where, [&] {
      if (key == "seed") {
        cfg.seed = detail::parse_number<std::uint64_t>(value, where);
      } else if (key == "mode") {
        cfg.mode = protocol::parse_mode(value);
      } else if (key == "packing.strategy") {
        cfg.strategy = packing::parse_strategy(value);
      } else if (key == "packing.kernel") {
        HPI_ENFORCE(value == "naive" || value == "log_step", kConfig, "expected naive or log_step");
        cfg.kernel = value == "naive" ? packing::Kernel::kNaive : packing::Kernel::kLogStep;
      } else if (key == "he.slots") {
        cfg.he_slots = detail::parse_number<std::size_t>(value, where);
      } else if (key == "he.ciphertext_bytes") {
        cfg.ciphertext_bytes = detail::parse_number<std::size_t>(value, where);
      } else if (key == "channel.delay_s") {
        cfg.channel.delay_s = detail::parse_double(value, where);
      } else if (key == "channel.bandwidth_Bps") {
        cfg.channel.bandwidth_Bps = detail::parse_double(value, where);
      } else if (key == "range") {
        HPI_ENFORCE(value == "strict" || value == "permissive", kConfig, "expected strict or permissive");
        cfg.strict = value == "strict";
      } else if (key == "backend") {
        HPI_ENFORCE(value == "semantic" || value == "garbled", kConfig, "expected semantic or garbled");
        cfg.backend = value == "semantic" ? nonpoly::Backend::kSemantic : nonpoly::Backend::kGarbled;
      } else if (key == "report") {
        cfg.report_path = value;
      } else if (key == "model") {
        cfg.model_path = detail::resolve(base, value);
      } else if (key == "weights") {
        cfg.weights_path = detail::resolve(base, value);
      } else if (key == "tokens") {
        std::istringstream ts(value);
        std::string tok;
        while (std::getline(ts, tok, ',')) cfg.tokens.push_back(detail::parse_number<std::size_t>(detail::trim(tok), where));
      } else if (key.rfind("model.", 0) == 0) {
        model_keys[key.substr(6)] = {value, where};
      } else {
        ::hpi::detail::throw_error(ErrorCode::kConfig, "unknown key");
      }
      return 0;
    });
  }
  if (!cfg.model_path.empty()) {
    HPI_ENFORCE(model_keys.empty(), kConfig, origin, ": 'model' path and inline model.* keys are exclusive");
    std::ifstream f(cfg.model_path);
    HPI_ENFORCE(f.good(), kConfig, "cannot open model config ", cfg.model_path);
    cfg.model = detail::at_field(cfg.model_path, [&] { return model::config_from_json(nlohmann::json::parse(f)); });
  }
  auto& m = cfg.model;
  for (const auto& [k, vw] : model_keys) {
    const auto& [v, where] = vw;
    detail::at_field(where, [&] {
      if (k == "N") m.N = detail::parse_number<std::size_t>(v, where);
      else if (k == "d_emb") m.d_emb = detail::parse_number<std::size_t>(v, where);
      else if (k == "H") m.H = detail::parse_number<std::size_t>(v, where);
      else if (k == "n") m.n = detail::parse_number<std::size_t>(v, where);
      else if (k == "d_oh") m.d_oh = detail::parse_number<std::size_t>(v, where);
      else if (k == "d_ff") m.d_ff = detail::parse_number<std::size_t>(v, where);
      else if (k == "d_out") m.d_out = detail::parse_number<std::size_t>(v, where);
      else if (k == "activation") m.activation = model::parse_activation(v);
      else if (k == "norm") m.norm = model::parse_norm(v);
      else if (k == "delta") m.delta = detail::parse_double(v, where);
      else ::hpi::detail::throw_error(ErrorCode::kConfig, "unknown key");
      return 0;
    });
  }
  detail::at_field(origin, [&] {
    m.validate();
    cfg.channel.validate();
    cfg.engine().validate();
    return 0;
  });
  for (std::size_t t : cfg.tokens)
    HPI_ENFORCE(t < m.d_oh, kConfig, origin, ": field 'tokens': token ", t, " outside vocabulary of ", m.d_oh);
  HPI_ENFORCE(cfg.tokens.empty() || cfg.tokens.size() == m.n, kConfig, origin, ": field 'tokens': ",
              cfg.tokens.size(), " tokens for sequence length ", m.n);
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  HPI_ENFORCE(f.good(), kConfig, "cannot open config ", path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path);
}

/// Model weights and input tokens a config resolves to.
struct Workload {
  model::ModelConfig config;
  model::ModelWeights weights;
  std::vector<std::size_t> tokens;
};

inline Workload resolve_workload(const RunConfig& cfg) {
  Workload w;
  CounterRng rng(cfg.require_seed());
  if (!cfg.weights_path.empty()) {
    auto [c, ws] = model::load_weights_file(cfg.weights_path);
    HPI_ENFORCE(c == cfg.model, kConfig, "weights in ", cfg.weights_path, " were saved for a different model config");
    w.config = c;
    w.weights = std::move(ws);
  } else {
    w.config = cfg.model;
    auto wr = rng.fork(10);
    w.weights = model::random_weights(w.config, wr);
  }
  w.tokens = cfg.tokens;
  if (w.tokens.empty()) {
    auto tr = rng.fork(11);
    for (std::size_t i = 0; i < w.config.n; ++i) w.tokens.push_back(static_cast<std::size_t>(tr() % w.config.d_oh));
  }
  return w;
}

// ---------------------------------------------------------------------------
// Reports

struct StepRow {
  Step step = Step::kOthers;
  OpCounts ops[kNumPhases];
  std::size_t interactions[kNumPhases] = {0, 0};
  std::uint64_t bytes[kNumPhases] = {0, 0};
  double modeled_s[kNumPhases] = {0, 0};
};

struct Report {
  protocol::Mode mode = protocol::Mode::kF;
  packing::Strategy strategy = packing::Strategy::kFeaturesFirst;
  std::string backend;
  std::uint64_t seed = 0;
  model::ModelConfig model{};
  std::vector<StepRow> steps;
  StepRow total;
  std::size_t flagged_rows = 0;
  bool equivalent = false;
  double max_abs_error = 0;  // decoded logits against the reference
  double tolerance = 0;
  bool audit_ok = false;
  std::vector<std::string> audit_violations;
  std::size_t score_path_interactions = 0;  // block 0, online
  std::vector<double> logits;

  double modeled_total_s() const { return total.modeled_s[0] + total.modeled_s[1]; }
};

inline nlohmann::json ops_json(const OpCounts& c) {
  return {{"encrypt", c.encrypt}, {"decrypt", c.decrypt}, {"add", c.add},
          {"add_plain", c.add_plain}, {"mul_plain", c.mul_plain}, {"rotate", c.rotate},
          {"mul_ct_ct", c.mul_ct_ct}, {"he_total", c.he_total()}, {"gc_and", c.gc_and},
          {"gc_xor", c.gc_xor}, {"ot", c.ot}, {"saturations", c.saturations}};
}

inline nlohmann::json row_json(const StepRow& r) {
  nlohmann::json j;
  for (Phase p : {Phase::kOffline, Phase::kOnline}) {
    const auto i = static_cast<std::size_t>(p);
    j[std::string(phase_name(p))] = {{"ops", ops_json(r.ops[i])},
                                     {"interactions", r.interactions[i]},
                                     {"bytes", r.bytes[i]},
                                     {"modeled_seconds", r.modeled_s[i]}};
  }
  return j;
}

/// The structured (canonical) form. Keys are sorted; output is a pure
/// function of the report.
inline nlohmann::json report_json(const Report& r) {
  nlohmann::json steps = nlohmann::json::object();
  for (const auto& s : r.steps) steps[std::string(step_name(s.step))] = row_json(s);
  return {{"mode", protocol::mode_name(r.mode)},
          {"packing", packing::strategy_name(r.strategy)},
          {"backend", r.backend},
          {"seed", r.seed},
          {"model", model::config_to_json(r.model)},
          {"steps", steps},
          {"total", row_json(r.total)},
          {"message_bytes", r.total.bytes[0] + r.total.bytes[1]},
          {"modeled_latency_seconds",
           {{"offline", r.total.modeled_s[0]}, {"online", r.total.modeled_s[1]}, {"total", r.modeled_total_s()}}},
          {"score_path_interactions", r.score_path_interactions},
          {"flagged_rows", r.flagged_rows},
          {"equivalence",
           {{"verdict", r.equivalent ? "pass" : "fail"}, {"max_abs_error", r.max_abs_error}, {"tolerance", r.tolerance}}},
          {"audit", {{"verdict", r.audit_ok ? "pass" : "fail"}, {"violations", r.audit_violations}}},
          {"logits", r.logits}};
}

inline std::string report_text(const Report& r) {
  std::ostringstream os;
  os << "mode " << protocol::mode_name(r.mode) << ", packing " << packing::strategy_name(r.strategy) << ", backend "
     << r.backend << ", seed " << r.seed << "\n";
  os << std::left << std::setw(11) << "step" << std::right << std::setw(10) << "off.HE" << std::setw(10) << "on.HE"
     << std::setw(12) << "on.AND" << std::setw(8) << "off.int" << std::setw(8) << "on.int" << std::setw(14)
     << "bytes" << std::setw(13) << "off.s(mod)" << std::setw(13) << "on.s(mod)" << "\n";
  auto line = [&](const std::string& name, const StepRow& s) {
    os << std::left << std::setw(11) << name << std::right << std::setw(10) << s.ops[0].he_total() << std::setw(10)
       << s.ops[1].he_total() << std::setw(12) << s.ops[1].gc_and << std::setw(8) << s.interactions[0]
       << std::setw(8) << s.interactions[1] << std::setw(14) << s.bytes[0] + s.bytes[1] << std::fixed
       << std::setprecision(4) << std::setw(13) << s.modeled_s[0] << std::setw(13) << s.modeled_s[1] << "\n";
    os.unsetf(std::ios::floatfield);
  };
  for (const auto& s : r.steps) line(std::string(step_name(s.step)), s);
  line("Total", r.total);
  os << "modeled latency: " << std::fixed << std::setprecision(4) << r.modeled_total_s() << " s (offline "
     << r.total.modeled_s[0] << ", online " << r.total.modeled_s[1] << ")\n";
  os << "equivalence: " << (r.equivalent ? "pass" : "fail") << " (max |error| " << std::setprecision(6)
     << r.max_abs_error << ")   audit: " << (r.audit_ok ? "pass" : "fail") << "\n";
  return os.str();
}

/// Builds the per-step table from a finished run.
inline Report make_report(const RunConfig& cfg, const Workload& w, const protocol::RunResult& run,
                          const FixedTensor& reference, const model::Trace& trace) {
  Report r;
  r.mode = cfg.mode;
  r.strategy = cfg.engine().packing();
  r.backend = cfg.backend == nonpoly::Backend::kSemantic ? "semantic" : "garbled";
  r.seed = cfg.require_seed();
  r.model = w.config;
  const protocol::OpCostTable table{};
  const auto interactions = run.transcript->interactions();
  for (Step s : kAllSteps) {
    StepRow row;
    row.step = s;
    for (Phase p : {Phase::kOffline, Phase::kOnline}) {
      const auto i = static_cast<std::size_t>(p);
      row.ops[i] = run.ledger->at(s, p);
      row.interactions[i] = run.transcript->interaction_count(s, p);
      row.bytes[i] = run.transcript->bytes(s, p);
      row.modeled_s[i] = table.seconds(row.ops[i]) + protocol::network_seconds(row.interactions[i], row.bytes[i], cfg.channel);
    }
    r.steps.push_back(row);
  }
  for (const auto& row : r.steps)
    for (std::size_t i = 0; i < kNumPhases; ++i) {
      r.total.ops[i] += row.ops[i];
      r.total.interactions[i] += row.interactions[i];
      r.total.bytes[i] += row.bytes[i];
      r.total.modeled_s[i] += row.modeled_s[i];
    }
  r.flagged_rows = run.flagged_rows;
  r.score_path_interactions = run.transcript->score_path_interactions(0);
  r.logits = model::decode_logits(w.config, run.logits);
  const auto ref = model::decode_logits(w.config, reference);
  for (std::size_t i = 0; i < ref.size(); ++i) r.max_abs_error = std::max(r.max_abs_error, std::abs(ref[i] - r.logits[i]));
  if (cfg.backend == nonpoly::Backend::kSemantic) {
    r.tolerance = 0;
    r.equivalent = run.logits == reference;
  } else {
    r.tolerance = 1.0 / 16;
    r.equivalent = r.max_abs_error <= r.tolerance;
  }
  auto logical = trace;
  logical["onehot"] = model::one_hot(w.tokens, w.config.d_oh);
  logical["logits"] = reference;
  const auto audit = protocol::audit_server(run.server, logical);
  r.audit_ok = audit.ok;
  r.audit_violations = audit.violations;
  return r;
}

struct RunOutput {
  Report report;
  protocol::RunResult run;
};

inline RunOutput run_with_result(const RunConfig& cfg) {
  const auto w = resolve_workload(cfg);
  model::Trace trace;
  model::ForwardOptions fo;
  fo.trace = &trace;
  const auto reference = model::reference_forward(w.config, w.weights, w.tokens, fo);
  auto run = protocol::run_protocol(w.config, w.weights, w.tokens, cfg.engine());
  auto report = make_report(cfg, w, run, reference, trace);
  return {std::move(report), std::move(run)};
}

inline Report cmd_run(const RunConfig& cfg) { return run_with_result(cfg).report; }

/// The four-mode ablation over one config.
inline std::vector<Report> cmd_compare(const RunConfig& cfg) {
  std::vector<Report> out;
  for (protocol::Mode m : protocol::kAllModes) {
    RunConfig c = cfg;
    c.mode = m;
    c.strategy = cfg.strategy;
    out.push_back(cmd_run(c));
  }
  return out;
}

inline nlohmann::json compare_json(const std::vector<Report>& reports) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reports) j.push_back(report_json(r));
  return j;
}

/// One row per mode; per-step online HE ops and modeled online seconds.
inline std::string compare_text(const std::vector<Report>& reports) {
  std::ostringstream os;
  os << "online HE operations per step\n" << std::left << std::setw(6) << "mode";
  for (Step s : kAllSteps) os << std::right << std::setw(12) << step_name(s);
  os << std::setw(12) << "Total" << "\n";
  for (const auto& r : reports) {
    os << std::left << std::setw(6) << protocol::mode_name(r.mode) << std::right;
    for (const auto& s : r.steps) os << std::setw(12) << s.ops[1].he_total();
    os << std::setw(12) << r.total.ops[1].he_total() << "\n";
  }
  os << "\nmodeled online seconds per step\n" << std::left << std::setw(6) << "mode";
  for (Step s : kAllSteps) os << std::right << std::setw(12) << step_name(s);
  os << std::setw(12) << "Total" << std::setw(12) << "Offline" << std::setw(14) << "bytes" << "\n";
  for (const auto& r : reports) {
    os << std::left << std::setw(6) << protocol::mode_name(r.mode) << std::right << std::fixed << std::setprecision(4);
    for (const auto& s : r.steps) os << std::setw(12) << s.modeled_s[1];
    os << std::setw(12) << r.total.modeled_s[1] << std::setw(12) << r.total.modeled_s[0];
    os.unsetf(std::ios::floatfield);
    os << std::setw(14) << r.total.bytes[0] + r.total.bytes[1] << "\n";
  }
  return os.str();
}

struct VerifyResult {
  bool ok = true;
  std::vector<std::string> failures;
};

/// Checks one report's invariants; failures are appended with `prefix`.
inline void check_report(const Report& r, const std::string& prefix, VerifyResult& v) {
  auto fail = [&](const std::string& what) {
    v.ok = false;
    v.failures.push_back(prefix + what);
  };
  if (!r.equivalent) fail("reconstruction differs from the reference (max |error| " + std::to_string(r.max_abs_error) + ")");
  if (!r.audit_ok) fail("server audit: " + (r.audit_violations.empty() ? std::string("failed") : r.audit_violations[0]));
  if (r.total.ops[0].mul_ct_ct + r.total.ops[1].mul_ct_ct != 0) fail("ciphertext-ciphertext products recorded");
  const std::size_t want = protocol::expected_score_path_interactions(r.mode, r.model.norm);
  if (r.score_path_interactions != want)
    fail("score path used " + std::to_string(r.score_path_interactions) + " online interactions, expected " +
         std::to_string(want));
  for (Step s : {Step::kEmbed, Step::kQKV, Step::kOthers}) {
    const auto he = r.steps[static_cast<std::size_t>(s)].ops[1].he_total();
    if (r.mode != protocol::Mode::kBase && he != 0)
      fail(std::string(step_name(s)) + " has " + std::to_string(he) + " online HE operations");
    if (r.mode == protocol::Mode::kBase && he == 0) fail(std::string(step_name(s)) + " has no online HE operations");
  }
  StepRow sum;
  for (const auto& s : r.steps)
    for (std::size_t i = 0; i < kNumPhases; ++i) {
      sum.ops[i] += s.ops[i];
      sum.interactions[i] += s.interactions[i];
      sum.bytes[i] += s.bytes[i];
    }
  for (std::size_t i = 0; i < kNumPhases; ++i)
    if (!(sum.ops[i] == r.total.ops[i]) || sum.interactions[i] != r.total.interactions[i] ||
        sum.bytes[i] != r.total.bytes[i])
      fail("step rows do not add up to the total");
}

/// Runs every mode (or only `cfg.mode` when `all_modes` is false) and
/// checks reconstruction, the server audit and the report invariants.
inline VerifyResult cmd_verify(const RunConfig& cfg, bool all_modes = true) {
  VerifyResult v;
  std::vector<protocol::Mode> modes;
  if (all_modes)
    modes.assign(protocol::kAllModes.begin(), protocol::kAllModes.end());
  else
    modes.push_back(cfg.mode);
  for (protocol::Mode m : modes) {
    RunConfig c = cfg;
    c.mode = m;
    const std::string prefix = std::string(protocol::mode_name(m)) + ": ";
    try {
      check_report(cmd_run(c), prefix, v);
    } catch (const Error& e) {
      v.ok = false;
      v.failures.push_back(prefix + e.what());
    }
  }
  return v;
}

inline nlohmann::json plan_json(const packing::PackingLayout& l) {
  return {{"strategy", packing::strategy_name(l.strategy)},
          {"n", l.n},
          {"d", l.d},
          {"slots", l.M},
          {"ciphertexts", l.c},
          {"predicted_rotations", l.predicted_rotations}};
}

inline packing::PackingLayout cmd_plan(std::size_t n, std::size_t d, std::size_t M) {
  return packing::plan_layout(n, d, M);
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  HPI_ENFORCE(f.good(), kConfig, "cannot write ", path);
  f << text;
  HPI_ENFORCE(f.good(), kConfig, "write to ", path, " failed");
}

}  // namespace hpi::cli
