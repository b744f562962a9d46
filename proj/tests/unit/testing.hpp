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

#ifndef QVQA_TESTS_TESTING_HPP_
#define QVQA_TESTS_TESTING_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "qvqa/error.hpp"
#include "qvqa/tensor.hpp"

namespace qvqa::testing {

using oracle::Pick;
using oracle::Random;

// Largest |a - b| / max(1, |b|).
inline double MaxRelDiff(const RealTensor& a, const RealTensor& b) {
  REQUIRE(a.shape() == b.shape());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  }
  return worst;
}

template <typename F>
ErrorKind KindOf(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kIo;
}

// Central difference of a scalar function with respect to every element of
// `x`, which is perturbed in place and restored.
inline RealTensor NumericGrad(RealTensor& x, const std::function<double()>& f, double h = 1e-6) {
  RealTensor g(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline double Dot(const RealTensor& a, const RealTensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace qvqa::testing

#endif  // QVQA_TESTS_TESTING_HPP_
