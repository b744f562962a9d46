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

#ifndef QVQA_MODEL_HPP_
#define QVQA_MODEL_HPP_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "qvqa/graph.hpp"
#include "qvqa/kernels.hpp"
#include "qvqa/quant.hpp"

namespace qvqa {

// Double-precision model: a GraphSpec plus one tensor per ParameterLayout entry.
struct Model {
  GraphSpec spec;
  std::map<std::string, RealTensor> params;

  const RealTensor& param(const std::string& name) const;
  std::size_t ParameterCount() const;
  // Bytes of a full-integer model: int8 weights, int32 biases, plus a fixed
  // per-tensor record overhead.
  std::size_t Int8SizeEstimate() const;

  bool operator==(const Model&) const = default;
};

// Uniform fan-in initialization U(-g/sqrt(fan_in), g/sqrt(fan_in)) with g =
// sqrt(6) for conv weights and 1 elsewhere; biases 0,
// LSTM forget-gate bias 1, padding embedding row 0. Deterministic per seed.
Model BuildModel(const GraphSpec& spec, std::uint64_t seed);

// Throws kConfig unless `params` holds exactly the tensors of the layout.
void ValidateParams(const GraphSpec& spec, const std::map<std::string, RealTensor>& params);

struct AttentionMap {
  RealTensor weights;  // [h, w], a distribution over grid cells
};

struct VisualMask {
  RealTensor mask;  // [h, w], non-negative
};

// Sums to 1; an all-zero mask becomes uniform.
RealTensor NormalizeMask(const VisualMask& mask);
// Block-averages a mask onto a coarser grid whose extents divide it.
VisualMask ResampleMask(const VisualMask& mask, std::size_t grid_h, std::size_t grid_w);

// Mean squared error between the attention map and the normalized mask.
double AttentionLoss(const AttentionMap& predicted, const VisualMask& mask);

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

struct VqaOutput {
  RealTensor answer_logits;
  RealTensor answer_probs;
  RealTensor attention_logits;  // [h * w]
  AttentionMap attention;
};

// Everything the backward pass and calibration need from one forward pass.
struct ForwardTrace {
  struct ConvStage {
    RealTensor input;
    RealTensor spatial;    // depthwise output (separable stages only)
    RealTensor activated;  // conv (+ReLU) output
    RealTensor output;     // after optional pooling
  };
  RealTensor image;
  std::vector<ConvStage> image_stages;
  std::vector<std::int32_t> tokens;  // non-padding prefix
  RealTensor embedded;               // [seq, 1, embed]
  std::vector<ConvStage> text_stages;
  nn::LstmCache lstm;
  RealTensor question;  // f_T
  RealTensor grid;      // f_I
  nn::MfbExpandCache expand;
  RealTensor expanded;
  nn::MfbSqueezeCache squeeze;
  RealTensor squeezed;
  RealTensor attention_logits;
  RealTensor attention;
  RealTensor attended;
  RealTensor question_out;
  RealTensor joint;
  RealTensor answer_logits;
  RealTensor answer_probs;
};

// Non-padding prefix of a padded token sequence. Throws kEmptyQuestion when
// it is empty and kShape when an id is outside the embedding table.
std::vector<std::int32_t> ActiveTokens(std::span<const std::int32_t> token_ids,
                                       const GraphSpec& spec);

RealTensor ImageFeatures(const Model& model, const RealTensor& image);

VqaOutput ForwardVqa(const Model& model, const RealTensor& image,
                     std::span<const std::int32_t> token_ids, const ForwardOptions& options = {},
                     ForwardTrace* trace = nullptr);

// Named activation tensors of a trace, keyed like QuantModel::activations.
std::vector<std::pair<std::string, const RealTensor*>> TraceActivations(const ForwardTrace& trace,
                                                                        const GraphSpec& spec);

// ---- full-integer model ----

struct QuantModel {
  GraphSpec spec;
  std::map<std::string, QuantTensor> weights;  // symmetric int8
  std::map<std::string, BiasTensor> biases;    // int32
  std::map<std::string, QuantParams> activations;

  const QuantTensor& weight(const std::string& name) const;
  const BiasTensor& bias(const std::string& name) const;
  const QuantParams& activation(const std::string& name) const;

  bool operator==(const QuantModel&) const = default;
};

// Fixed-point scale of LSTM biases, which feed the float-executed cell.
inline constexpr double kLstmBiasScale = 1.0 / (1 << 20);

struct CalibrationSample {
  RealTensor image;
  std::vector<std::int32_t> tokens;
};

// Post-training full-integer quantization: symmetric per-tensor weights,
// asymmetric activations from min/max over the calibration batch.
QuantModel QuantizeModel(const Model& model, std::span<const CalibrationSample> calibration);

// Layer outputs of the integer path keyed by layer name (see LowerGraph).
struct QuantTrace {
  std::map<std::string, QuantTensor> tensors;
  Tensor<std::int32_t> pooled;  // fuse.pool
  RealTensor question_float;    // LSTM output before quantization
};

VqaOutput ForwardVqa(const QuantModel& model, const QuantTensor& image,
                     std::span<const std::int32_t> token_ids, QuantTrace* trace = nullptr);
VqaOutput ForwardVqa(const QuantModel& model, const RealTensor& image,
                     std::span<const std::int32_t> token_ids, QuantTrace* trace = nullptr);

// Dequantized LSTM weights used by the float-executed recurrence.
std::vector<nn::LstmLayerWeights> DequantizedLstm(const QuantModel& model);

}  // namespace qvqa

#endif  // QVQA_MODEL_HPP_
