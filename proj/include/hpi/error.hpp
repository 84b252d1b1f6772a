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

#include <sstream>
#include <stdexcept>
#include <string>

namespace hpi {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kOverflow,
  kWrongKey,
  kOversize,
  kOutOfRange,
  kKeyMismatch,
  kNoiseBudget,
  kTripleReuse,
  kMissingMaterial,
  kRangeViolation,
  kDecodeFailure,
  kSchema,
  kConfig,
  kUnsupported,
  kInternal,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kOverflow: return "overflow";
    case ErrorCode::kWrongKey: return "wrong_key";
    case ErrorCode::kOversize: return "oversize";
    case ErrorCode::kOutOfRange: return "out_of_range";
    case ErrorCode::kKeyMismatch: return "key_mismatch";
    case ErrorCode::kNoiseBudget: return "noise_budget";
    case ErrorCode::kTripleReuse: return "triple_reuse";
    case ErrorCode::kMissingMaterial: return "missing_material";
    case ErrorCode::kRangeViolation: return "range_violation";
    case ErrorCode::kDecodeFailure: return "decode_failure";
    case ErrorCode::kSchema: return "schema";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kUnsupported: return "unsupported";
    case ErrorCode::kInternal: return "internal";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + msg),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

namespace detail {

template <typename... Args>
[[noreturn]] void throw_error(ErrorCode code, const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  throw Error(code, os.str());
}

}  // namespace detail

}  // namespace hpi

#define HPI_ENFORCE(cond, code, ...)                      \
  do {                                                    \
    if (!(cond)) {                                        \
      ::hpi::detail::throw_error(::hpi::ErrorCode::code,  \
                                 __VA_ARGS__);            \
    }                                                     \
  } while (0)
