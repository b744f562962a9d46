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

#ifndef QVQA_KERNELS_HPP_
#define QVQA_KERNELS_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "qvqa/tensor.hpp"

// Double-precision reference kernels and their reverse-mode gradients.
// Feature maps are [h, w, c]; convolution is cross-correlation (no flip).
namespace qvqa::nn {

enum class Padding { kValid, kSame };

struct ConvSpec {
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  Padding padding = Padding::kSame;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  bool depthwise_separable = false;

  bool operator==(const ConvSpec&) const = default;
};

// Output extent and zero padding for one spatial axis pair. "same" pads
// symmetrically, the odd pixel going to the bottom/right.
struct ConvGeometry {
  std::size_t in_h = 0, in_w = 0;
  std::size_t out_h = 0, out_w = 0;
  std::size_t pad_top = 0, pad_left = 0;
};

ConvGeometry ResolveGeometry(std::size_t in_h, std::size_t in_w, std::size_t kernel_h,
                             std::size_t kernel_w, std::size_t stride, Padding padding);

std::size_t ConvParamCount(const ConvSpec& spec, bool with_bias = true);

RealTensor Conv2d(const RealTensor& input, const RealTensor& weights, const RealTensor& bias,
                  const ConvSpec& spec);
RealTensor DepthwiseConv2d(const RealTensor& input, const RealTensor& weights,
                           const RealTensor& bias, const ConvSpec& spec);
RealTensor DepthwiseSeparableConv2d(const RealTensor& input, const RealTensor& dw_weights,
                                    const RealTensor& dw_bias, const RealTensor& pw_weights,
                                    const RealTensor& pw_bias, const ConvSpec& spec);
RealTensor MaxPool2d(const RealTensor& input, std::size_t window, std::size_t stride);
RealTensor Dense(const RealTensor& input, const RealTensor& weights, const RealTensor& bias);
// Applies Dense independently to every cell of an [h, w, n] grid.
RealTensor CellDense(const RealTensor& grid, const RealTensor& weights, const RealTensor& bias);
RealTensor Relu(const RealTensor& input);

// q_i = exp(z_i / T) / sum_j exp(z_j / T), max-subtracted.
RealTensor SoftmaxWithTemperature(const RealTensor& logits, double temperature);

struct LstmSpec {
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 1;
  std::size_t num_layers = 1;

  bool operator==(const LstmSpec&) const = default;
};

// Gate rows are concatenated in (i, f, g, o) order.
struct LstmLayerWeights {
  RealTensor w_ih;  // [4H, in]
  RealTensor w_hh;  // [4H, H]
  RealTensor bias;  // [4H]
};

struct LstmCache {
  // Per layer, per step: layer input x_t, gate activations (i, f, g, o),
  // cell state c_t and hidden h_t. Index 0 of cells/hiddens is the zero state.
  struct Layer {
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> gates;
    std::vector<std::vector<double>> cells;
    std::vector<std::vector<double>> hiddens;
  };
  std::vector<Layer> layers;
};

// Runs the stacked recurrence from a zero state over [seq_len, input_dim]
// and returns the final hidden state of the last layer.
RealTensor LstmSequence(const RealTensor& sequence, const LstmSpec& spec,
                        std::span<const LstmLayerWeights> weights, LstmCache* cache = nullptr);

struct DenseParams {
  RealTensor weights;  // [out, in]
  RealTensor bias;     // [out]
};

struct MfbExpandCache {
  RealTensor image_projected;   // [h, w, kf]
  RealTensor question_projected;  // [kf]
  std::vector<double> dropout_scale;  // empty when dropout is the identity
};

// Per grid cell (P_img x + b) * (P_q q + b), followed by inverted dropout.
// Dropout applies only when training and rate > 0, seeded explicitly.
RealTensor MfbExpand(const RealTensor& image_grid, const RealTensor& question,
                     const DenseParams& image_proj, const DenseParams& question_proj,
                     double dropout_rate, std::uint64_t seed, bool training = true,
                     MfbExpandCache* cache = nullptr);

struct MfbSqueezeCache {
  RealTensor pooled;  // [h, w, k]
  RealTensor powered;
  double norm = 0.0;
};

// Sum-pools groups of `factor`, signed square root, then l2 normalization of
// the whole flattened result (a zero tensor stays zero).
RealTensor MfbSqueeze(const RealTensor& expanded, std::size_t factor,
                      MfbSqueezeCache* cache = nullptr);

std::vector<double> DropoutScale(std::size_t n, double rate, std::uint64_t seed);

// ---- gradients ----

struct ParamGrads {
  RealTensor input;
  RealTensor weights;
  RealTensor bias;
};

ParamGrads Conv2dBackward(const RealTensor& input, const RealTensor& weights, const ConvSpec& spec,
                          const RealTensor& grad_output);
ParamGrads DepthwiseConv2dBackward(const RealTensor& input, const RealTensor& weights,
                                   const ConvSpec& spec, const RealTensor& grad_output);
RealTensor MaxPool2dBackward(const RealTensor& input, std::size_t window, std::size_t stride,
                             const RealTensor& grad_output);
ParamGrads DenseBackward(const RealTensor& input, const RealTensor& weights,
                         const RealTensor& grad_output);
ParamGrads CellDenseBackward(const RealTensor& grid, const RealTensor& weights,
                             const RealTensor& grad_output);
RealTensor ReluBackward(const RealTensor& output, const RealTensor& grad_output);
RealTensor SoftmaxBackward(const RealTensor& probs, const RealTensor& grad_probs,
                           double temperature);

struct LstmGrads {
  RealTensor input;  // [seq_len, input_dim]
  std::vector<LstmLayerWeights> layers;
};
LstmGrads LstmBackward(const LstmCache& cache, const LstmSpec& spec,
                       std::span<const LstmLayerWeights> weights, const RealTensor& grad_hidden);

struct MfbExpandGrads {
  RealTensor image_grid;
  RealTensor question;
  DenseParams image_proj;
  DenseParams question_proj;
};
MfbExpandGrads MfbExpandBackward(const RealTensor& image_grid, const RealTensor& question,
                                 const DenseParams& image_proj, const DenseParams& question_proj,
                                 const MfbExpandCache& cache, const RealTensor& grad_output);
RealTensor MfbSqueezeBackward(const MfbSqueezeCache& cache, std::size_t factor,
                              const RealTensor& grad_output);

}  // namespace qvqa::nn

#endif  // QVQA_KERNELS_HPP_
