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

#ifndef QVQA_QUANT_HPP_
#define QVQA_QUANT_HPP_

#include <cstdint>

#include "qvqa/tensor.hpp"

namespace qvqa {

inline constexpr std::int32_t kQMin = -128;
inline constexpr std::int32_t kQMax = 127;

// Affine int8 parameters: real = scale * (q - zero_point).
struct QuantParams {
  double scale = 1.0;
  std::int32_t zero_point = 0;

  void Validate() const;
  bool operator==(const QuantParams&) const = default;
};

struct QuantTensor {
  Tensor<std::int8_t> values;
  QuantParams qparams;

  QuantTensor() = default;
  QuantTensor(Tensor<std::int8_t> v, QuantParams qp) : values(std::move(v)), qparams(qp) {}

  const Shape& shape() const noexcept { return values.shape(); }
  std::size_t numel() const noexcept { return values.numel(); }
  std::int8_t operator[](std::size_t i) const { return values[i]; }

  bool operator==(const QuantTensor&) const = default;
};

// Symmetric int32 tensor (zero_point 0), used for biases on the integer path.
struct BiasTensor {
  Tensor<std::int32_t> values;
  double scale = 1.0;

  bool operator==(const BiasTensor&) const = default;
};

double RoundHalfAwayFromZero(double x);
std::int32_t ClampToInt8(std::int64_t v);

QuantParams ChooseQParams(const RealTensor& t, bool symmetric);
QuantParams ChooseQParamsFromRange(double min_value, double max_value, bool symmetric);

std::int8_t QuantizeValue(double x, const QuantParams& qp);
QuantTensor Quantize(const RealTensor& t, const QuantParams& qp);
RealTensor Dequantize(const QuantTensor& t);

// Quantizes a bias to int32 at scale input_scale * weight_scale.
BiasTensor QuantizeBias(const RealTensor& b, double scale);
RealTensor DequantizeBias(const BiasTensor& b);

// A real scale in (0, 1) as multiplier / 2^31 * 2^-right_shift with the
// multiplier normalized to [2^30, 2^31).
struct FixedPointScale {
  std::int32_t multiplier = 0;
  int right_shift = 0;

  static FixedPointScale FromReal(double effective_scale);
  double ToReal() const;
};

// round_half_away(acc * scale) using only integer arithmetic.
std::int32_t FixedPointMultiply(std::int32_t acc, FixedPointScale scale);

std::int8_t Requantize(std::int32_t acc, FixedPointScale scale, std::int32_t out_zero_point);
std::int8_t Requantize(std::int32_t acc, double effective_scale, std::int32_t out_zero_point);

// Double-precision reference for Requantize.
std::int8_t RequantizeReference(std::int32_t acc, double effective_scale,
                                std::int32_t out_zero_point);

// Any positive scale: scales >= 1 are folded into a saturating left shift
// applied before the fixed-point multiply.
struct OutputRescale {
  int left_shift = 0;
  FixedPointScale fixed;

  static OutputRescale FromReal(double scale);
  std::int32_t Apply(std::int32_t acc) const;
};

}  // namespace qvqa

#endif  // QVQA_QUANT_HPP_
