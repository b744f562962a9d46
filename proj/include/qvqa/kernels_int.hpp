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

#ifndef QVQA_KERNELS_INT_HPP_
#define QVQA_KERNELS_INT_HPP_

#include <cstdint>
#include <limits>
#include <vector>

#include "qvqa/kernels.hpp"
#include "qvqa/quant.hpp"

// Full-integer kernels. Weights are symmetric int8 (zero point 0), biases
// int32 at input_scale * weight_scale, accumulation in int32, then a
// fixed-point requantize to the output parameters.
namespace qvqa::nn {

// Explicit window placement so a row tile of a larger map can be computed
// with the same kernel: output row r reads input rows r*stride - pad_top + ky.
// Input rows outside [0, in_h) are padding (real zero).
struct QuantWindow {
  std::size_t out_h = 0, out_w = 0;
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t stride = 1;
  std::size_t pad_top = 0, pad_left = 0;
};

QuantWindow WindowFor(const ConvGeometry& g, std::size_t kernel_h, std::size_t kernel_w,
                      std::size_t stride);

QuantTensor Conv2dQ(const QuantTensor& input, const QuantTensor& weights, const BiasTensor& bias,
                    const QuantWindow& window, const QuantParams& out_qp, bool relu);
QuantTensor DepthwiseConv2dQ(const QuantTensor& input, const QuantTensor& weights,
                             const BiasTensor& bias, const QuantWindow& window,
                             const QuantParams& out_qp, bool relu);
// Valid-padding max pool operating on codes (order-preserving).
QuantTensor MaxPool2dQ(const QuantTensor& input, std::size_t window, std::size_t stride);

// Output rows [row_begin, row_end) of weights * input + bias.
QuantTensor DenseQ(const QuantTensor& input, const QuantTensor& weights, const BiasTensor& bias,
                   const QuantParams& out_qp, bool relu, std::size_t row_begin = 0,
                   std::size_t row_end = std::numeric_limits<std::size_t>::max());
QuantTensor CellDenseQ(const QuantTensor& grid, const QuantTensor& weights, const BiasTensor& bias,
                       const QuantParams& out_qp, bool relu);

// Elementwise product of an [h, w, n] grid with a broadcast [n] vector.
QuantTensor MulBroadcastQ(const QuantTensor& grid, const QuantTensor& vec, const QuantParams& out_qp);

QuantTensor AddQ(const QuantTensor& a, const QuantTensor& b, const QuantParams& out_qp);

// Sum of (code - zero_point) over consecutive groups of `factor`.
Tensor<std::int32_t> SumPoolQ(const QuantTensor& expanded, std::size_t factor);
std::int64_t AbsSum(const Tensor<std::int32_t>& pooled);

// Fixed output parameters of the normalized squeeze result (range [-1, 1]).
QuantParams NormalizedQParams();
// sign(x) sqrt(|x|) / ||.||_2 with x = input_scale * pooled, where the squared
// norm is input_scale * abs_sum computed exactly in integers.
QuantTensor PowerNormalizeQ(const Tensor<std::int32_t>& pooled, double input_scale,
                            std::int64_t abs_sum);

// Fixed output parameters of attention probabilities (range [0, 1]).
QuantParams ProbabilityQParams();

// Attention-weighted channel sums: acc[c] += sum over cells (a - za)(f - zf).
void AttentionPoolAccumulate(const QuantTensor& attention, const QuantTensor& features,
                             std::vector<std::int32_t>& acc);
QuantTensor AttentionPoolFinalize(const std::vector<std::int32_t>& acc, double attention_scale,
                                  double feature_scale, const QuantParams& out_qp);

}  // namespace qvqa::nn

#endif  // QVQA_KERNELS_INT_HPP_
