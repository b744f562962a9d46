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

#include "qvqa/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qvqa {

void QuantParams::Validate() const {
  Require(std::isfinite(scale) && scale > 0.0, ErrorKind::kInvalidScale,
          "quantization scale must be positive and finite");
  Require(zero_point >= kQMin && zero_point <= kQMax, ErrorKind::kInvalidScale,
          "zero point outside the int8 range");
}

double RoundHalfAwayFromZero(double x) { return std::round(x); }

std::int32_t ClampToInt8(std::int64_t v) {
  return static_cast<std::int32_t>(std::clamp<std::int64_t>(v, kQMin, kQMax));
}

QuantParams ChooseQParamsFromRange(double min_value, double max_value, bool symmetric) {
  Require(std::isfinite(min_value) && std::isfinite(max_value) && min_value <= max_value,
          ErrorKind::kInvalidTensor, "calibration range must be finite and ordered");
  const double lo = std::min(min_value, 0.0);
  const double hi = std::max(max_value, 0.0);
  if (lo == 0.0 && hi == 0.0) return {1.0, 0};
  if (symmetric) {
    return {std::max(-lo, hi) / 127.0, 0};
  }
  const double scale = (hi - lo) / 255.0;
  const auto zp = static_cast<std::int64_t>(kQMin - RoundHalfAwayFromZero(lo / scale));
  return {scale, ClampToInt8(zp)};
}

QuantParams ChooseQParams(const RealTensor& t, bool symmetric) {
  RequireFinite(t, "calibration tensor");
  const auto [lo, hi] = std::minmax_element(t.data().begin(), t.data().end());
  return ChooseQParamsFromRange(*lo, *hi, symmetric);
}

std::int8_t QuantizeValue(double x, const QuantParams& qp) {
  const double q = RoundHalfAwayFromZero(x / qp.scale) + qp.zero_point;
  return static_cast<std::int8_t>(std::clamp(q, double{kQMin}, double{kQMax}));
}

QuantTensor Quantize(const RealTensor& t, const QuantParams& qp) {
  qp.Validate();
  Tensor<std::int8_t> out(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) out[i] = QuantizeValue(t[i], qp);
  return {std::move(out), qp};
}

RealTensor Dequantize(const QuantTensor& t) {
  RealTensor out(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) {
    out[i] = t.qparams.scale * (static_cast<std::int32_t>(t.values[i]) - t.qparams.zero_point);
  }
  return out;
}

BiasTensor QuantizeBias(const RealTensor& b, double scale) {
  Require(std::isfinite(scale) && scale > 0.0, ErrorKind::kInvalidScale, "bias scale must be positive");
  Tensor<std::int32_t> out(b.shape());
  constexpr double kLo = std::numeric_limits<std::int32_t>::min();
  constexpr double kHi = std::numeric_limits<std::int32_t>::max();
  for (std::size_t i = 0; i < b.numel(); ++i) {
    out[i] = static_cast<std::int32_t>(std::clamp(RoundHalfAwayFromZero(b[i] / scale), kLo, kHi));
  }
  return {std::move(out), scale};
}

RealTensor DequantizeBias(const BiasTensor& b) {
  RealTensor out(b.values.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = b.scale * b.values[i];
  return out;
}

FixedPointScale FixedPointScale::FromReal(double effective_scale) {
  Require(std::isfinite(effective_scale) && effective_scale > 0.0 && effective_scale < 1.0,
          ErrorKind::kInvalidScale, "effective scale must lie in (0, 1), got " +
                                        std::to_string(effective_scale));
  int exponent = 0;
  const double fraction = std::frexp(effective_scale, &exponent);  // [0.5, 1)
  auto multiplier = static_cast<std::int64_t>(std::round(fraction * (1LL << 31)));
  int right_shift = -exponent;
  if (multiplier == (1LL << 31)) {
    multiplier /= 2;
    --right_shift;
  }
  if (right_shift < 0) {
    multiplier = std::numeric_limits<std::int32_t>::max();
    right_shift = 0;
  }
  return {static_cast<std::int32_t>(multiplier), right_shift};
}

double FixedPointScale::ToReal() const {
  return std::ldexp(static_cast<double>(multiplier), -31 - right_shift);
}

std::int32_t FixedPointMultiply(std::int32_t acc, FixedPointScale scale) {
  const std::int64_t prod = static_cast<std::int64_t>(acc) * scale.multiplier;
  const int total_shift = 31 + scale.right_shift;
  if (total_shift > 62) return 0;  // |prod| < 2^62 rounds to zero
  const std::int64_t magnitude = prod < 0 ? -prod : prod;
  const std::int64_t rounded = (magnitude + (std::int64_t{1} << (total_shift - 1))) >> total_shift;
  return static_cast<std::int32_t>(prod < 0 ? -rounded : rounded);
}

std::int8_t Requantize(std::int32_t acc, FixedPointScale scale, std::int32_t out_zero_point) {
  return static_cast<std::int8_t>(
      ClampToInt8(static_cast<std::int64_t>(FixedPointMultiply(acc, scale)) + out_zero_point));
}

std::int8_t Requantize(std::int32_t acc, double effective_scale, std::int32_t out_zero_point) {
  return Requantize(acc, FixedPointScale::FromReal(effective_scale), out_zero_point);
}

std::int8_t RequantizeReference(std::int32_t acc, double effective_scale,
                                std::int32_t out_zero_point) {
  const double v = RoundHalfAwayFromZero(static_cast<double>(acc) * effective_scale) + out_zero_point;
  return static_cast<std::int8_t>(std::clamp(v, double{kQMin}, double{kQMax}));
}

OutputRescale OutputRescale::FromReal(double scale) {
  Require(std::isfinite(scale) && scale > 0.0, ErrorKind::kInvalidScale,
          "rescale factor must be positive");
  OutputRescale r;
  if (scale >= 1.0) {
    int exponent = 0;
    std::frexp(scale, &exponent);
    r.left_shift = exponent;
    scale = std::ldexp(scale, -exponent);
  }
  r.fixed = FixedPointScale::FromReal(scale);
  return r;
}

std::int32_t OutputRescale::Apply(std::int32_t acc) const {
  const int shift = std::min(left_shift, 32);
  std::int64_t v = static_cast<std::int64_t>(acc) * (std::int64_t{1} << shift);
  v = std::clamp<std::int64_t>(v, std::numeric_limits<std::int32_t>::min(),
                               std::numeric_limits<std::int32_t>::max());
  return FixedPointMultiply(static_cast<std::int32_t>(v), fixed);
}

}  // namespace qvqa
