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

#ifndef QVQA_GRAPH_HPP_
#define QVQA_GRAPH_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "qvqa/kernels.hpp"

namespace qvqa {

enum class ModelRole { kTeacher, kStudent };

std::string_view RoleName(ModelRole role);
ModelRole ParseRole(std::string_view name);

// One convolutional stage: conv (regular or depthwise-separable), optional
// ReLU, optional max pool with window == stride (0 disables pooling).
struct ConvLayer {
  nn::ConvSpec conv;
  bool relu = true;
  std::size_t pool = 0;

  bool operator==(const ConvLayer&) const = default;
};

struct TextBranch {
  std::size_t vocab_size = 512;
  std::size_t embed_dim = 32;
  std::size_t max_question_len = 12;
  // Optional convolutions over the [seq, 1, embed] token map ahead of the
  // LSTM. Empty by default; kernel_w must be 1.
  std::vector<ConvLayer> convs;
  nn::LstmSpec lstm{32, 64, 1};

  bool operator==(const TextBranch&) const = default;
};

struct FusionSpec {
  std::size_t joint_dim = 320;  // k * f
  std::size_t factor = 5;       // f
  double dropout_rate = 0.1;

  std::size_t output_dim() const { return joint_dim / factor; }
  bool operator==(const FusionSpec&) const = default;
};

struct GraphSpec {
  ModelRole role = ModelRole::kStudent;
  std::size_t input_h = 64, input_w = 64, input_c = 3;
  std::vector<ConvLayer> image_branch;
  TextBranch text;
  FusionSpec fusion;
  std::size_t grid_h = 8, grid_w = 8;
  std::size_t num_answers = 16;

  // Throws kConfig when the stages do not chain or the image branch does not
  // land on the attention grid, or when a student uses a regular conv.
  void Validate() const;

  std::size_t grid_channels() const;
  bool operator==(const GraphSpec&) const = default;

  // 64x64x3 input, three depthwise-separable stride-2 stages 16->32->64 onto
  // an 8x8 grid, 32-d embedding, one LSTM layer of 64, k*f = 320 with f = 5.
  static GraphSpec DefaultStudent();
  // Reduced VGG-style stack on 64x64x3 reaching a 16x16x128 grid, two LSTM
  // layers of 128.
  static GraphSpec DefaultTeacher();
  // VGG-style 224x224x3 geometry reaching a 14x14 grid with the given
  // channel count; intermediate channels are capped at `channel_cap`.
  static GraphSpec Teacher224(std::size_t grid_channels, std::size_t channel_cap = 256);
};

struct ParamInfo {
  enum class Kind { kWeight, kBias, kEmbedding, kLstmWeight, kLstmBias };
  std::string name;
  Shape shape;
  Kind kind;
  std::size_t fan_in;
};

// Canonical ordered list of trainable tensors implied by a GraphSpec.
std::vector<ParamInfo> ParameterLayout(const GraphSpec& spec);

// Spatial output of the image branch, [h, w, c], after each stage.
std::vector<Shape> ImageStageShapes(const GraphSpec& spec);

nlohmann::ordered_json GraphSpecToJson(const GraphSpec& spec);
GraphSpec GraphSpecFromJson(const nlohmann::ordered_json& j);

}  // namespace qvqa

#endif  // QVQA_GRAPH_HPP_
