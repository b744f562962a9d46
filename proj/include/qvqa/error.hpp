/* Copyright 2026 The qvqa Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef QVQA_ERROR_HPP_
#define QVQA_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace qvqa {

enum class ErrorKind {
  kInvalidTensor,
  kShape,
  kInvalidScale,
  kInvalidTemperature,
  kEmptyQuestion,
  kConfig,
  kLabel,
  kNumeric,
  kInfeasibleLayer,
  kInfeasibleModel,
  kPlan,
  kCorruptFile,
  kUnsupportedVersion,
  kFormat,
  kUnsupported,
  kIo,
};

std::string_view ErrorKindName(ErrorKind kind);

// All library failures surface as this exception type; callers that need to
// branch on the failure class inspect kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidTensor: return "invalid-tensor";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kInvalidScale: return "invalid-scale";
    case ErrorKind::kInvalidTemperature: return "invalid-temperature";
    case ErrorKind::kEmptyQuestion: return "empty-question";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kLabel: return "label";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kInfeasibleLayer: return "infeasible-layer";
    case ErrorKind::kInfeasibleModel: return "infeasible-model";
    case ErrorKind::kPlan: return "plan";
    case ErrorKind::kCorruptFile: return "corrupt-file";
    case ErrorKind::kUnsupportedVersion: return "unsupported-version";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kUnsupported: return "unsupported";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

[[noreturn]] inline void Fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void Require(bool cond, ErrorKind kind, const std::string& message) {
  if (!cond) Fail(kind, message);
}

}  // namespace qvqa

#endif  // QVQA_ERROR_HPP_
