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

#include "qvqa/tensor.hpp"

#include <cmath>

namespace qvqa {

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  for (std::size_t d : dims_) {
    if (d == 0) Fail(ErrorKind::kShape, "shape extents must be >= 1, got " + ToString());
  }
}

std::size_t Shape::numel() const noexcept {
  std::size_t n = 1;
  for (std::size_t d : dims_) n *= d;
  return dims_.empty() ? 0 : n;
}

std::string Shape::ToString() const {
  std::string s = "[";
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims_[i]);
  }
  return s + "]";
}

void RequireFinite(const RealTensor& t, const std::string& what) {
  if (t.numel() == 0) Fail(ErrorKind::kInvalidTensor, what + " is empty");
  for (double v : t.data()) {
    if (!std::isfinite(v)) Fail(ErrorKind::kInvalidTensor, what + " contains a non-finite value");
  }
}

void RequireShape(const Shape& got, const Shape& want, const std::string& what) {
  if (got != want) {
    Fail(ErrorKind::kShape, what + ": expected " + want.ToString() + ", got " + got.ToString());
  }
}

}  // namespace qvqa
