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

#include "qvqa/graph.hpp"

#include <algorithm>

namespace qvqa {
namespace {

using nlohmann::ordered_json;

ConvLayer SeparableStage(std::size_t cin, std::size_t cout, std::size_t stride) {
  return {{3, 3, stride, nn::Padding::kSame, cin, cout, true}, true, 0};
}

ConvLayer RegularStage(std::size_t cin, std::size_t cout, std::size_t pool) {
  return {{3, 3, 1, nn::Padding::kSame, cin, cout, false}, true, pool};
}

// Applies conv + pool geometry to an [h, w, c] shape.
Shape StageOutput(const Shape& in, const ConvLayer& layer) {
  const auto& c = layer.conv;
  const auto g = nn::ResolveGeometry(in[0], in[1], c.kernel_h, c.kernel_w, c.stride, c.padding);
  std::size_t h = g.out_h, w = g.out_w;
  if (layer.pool > 0) {
    Require(layer.pool <= h && layer.pool <= w, ErrorKind::kConfig, "pool window exceeds feature map");
    h = (h - layer.pool) / layer.pool + 1;
    w = (w - layer.pool) / layer.pool + 1;
  }
  return Shape{h, w, c.out_channels};
}

ordered_json ConvLayerToJson(const ConvLayer& l) {
  return {{"kernel_h", l.conv.kernel_h},
          {"kernel_w", l.conv.kernel_w},
          {"stride", l.conv.stride},
          {"padding", l.conv.padding == nn::Padding::kSame ? "same" : "valid"},
          {"in_channels", l.conv.in_channels},
          {"out_channels", l.conv.out_channels},
          {"depthwise_separable", l.conv.depthwise_separable},
          {"relu", l.relu},
          {"pool", l.pool}};
}

ConvLayer ConvLayerFromJson(const ordered_json& j) {
  ConvLayer l;
  l.conv.kernel_h = j.at("kernel_h").get<std::size_t>();
  l.conv.kernel_w = j.at("kernel_w").get<std::size_t>();
  l.conv.stride = j.at("stride").get<std::size_t>();
  const auto pad = j.at("padding").get<std::string>();
  Require(pad == "same" || pad == "valid", ErrorKind::kConfig, "padding must be same or valid");
  l.conv.padding = pad == "same" ? nn::Padding::kSame : nn::Padding::kValid;
  l.conv.in_channels = j.at("in_channels").get<std::size_t>();
  l.conv.out_channels = j.at("out_channels").get<std::size_t>();
  l.conv.depthwise_separable = j.at("depthwise_separable").get<bool>();
  l.relu = j.at("relu").get<bool>();
  l.pool = j.at("pool").get<std::size_t>();
  return l;
}

void AddConvParams(std::vector<ParamInfo>& out, const std::string& prefix, const nn::ConvSpec& c) {
  using K = ParamInfo::Kind;
  const std::size_t k = c.kernel_h * c.kernel_w;
  if (c.depthwise_separable) {
    out.push_back({prefix + ".dw.w", Shape{c.kernel_h, c.kernel_w, c.in_channels}, K::kWeight, k});
    out.push_back({prefix + ".dw.b", Shape{c.in_channels}, K::kBias, k});
    out.push_back({prefix + ".pw.w", Shape{1, 1, c.in_channels, c.out_channels}, K::kWeight,
                   c.in_channels});
    out.push_back({prefix + ".pw.b", Shape{c.out_channels}, K::kBias, c.in_channels});
  } else {
    out.push_back({prefix + ".w", Shape{c.kernel_h, c.kernel_w, c.in_channels, c.out_channels},
                   K::kWeight, k * c.in_channels});
    out.push_back({prefix + ".b", Shape{c.out_channels}, K::kBias, k * c.in_channels});
  }
}

void AddDenseParams(std::vector<ParamInfo>& out, const std::string& prefix, std::size_t m,
                    std::size_t n) {
  out.push_back({prefix + ".w", Shape{m, n}, ParamInfo::Kind::kWeight, n});
  out.push_back({prefix + ".b", Shape{m}, ParamInfo::Kind::kBias, n});
}

}  // namespace

std::string_view RoleName(ModelRole role) {
  return role == ModelRole::kTeacher ? "teacher" : "student";
}

ModelRole ParseRole(std::string_view name) {
  if (name == "teacher") return ModelRole::kTeacher;
  if (name == "student") return ModelRole::kStudent;
  Fail(ErrorKind::kConfig, "unknown model role '" + std::string(name) + "'");
}

std::vector<Shape> ImageStageShapes(const GraphSpec& spec) {
  std::vector<Shape> shapes;
  Shape cur{spec.input_h, spec.input_w, spec.input_c};
  for (const auto& layer : spec.image_branch) {
    Require(layer.conv.in_channels == cur[2], ErrorKind::kConfig,
            "image stage expects " + std::to_string(layer.conv.in_channels) +
                " input channels, previous stage yields " + std::to_string(cur[2]));
    cur = StageOutput(cur, layer);
    shapes.push_back(cur);
  }
  return shapes;
}

std::size_t GraphSpec::grid_channels() const {
  return image_branch.empty() ? input_c : image_branch.back().conv.out_channels;
}

void GraphSpec::Validate() const {
  try {
    Require(input_h >= 1 && input_w >= 1 && input_c >= 1, ErrorKind::kConfig, "empty input shape");
    Require(!image_branch.empty(), ErrorKind::kConfig, "image branch has no layers");
    const auto shapes = ImageStageShapes(*this);
    const Shape& grid = shapes.back();
    Require(grid[0] == grid_h && grid[1] == grid_w, ErrorKind::kConfig,
            "image branch ends on a " + std::to_string(grid[0]) + "x" + std::to_string(grid[1]) +
                " grid but the attention grid is " + std::to_string(grid_h) + "x" +
                std::to_string(grid_w));
    if (role == ModelRole::kStudent) {
      for (const auto& l : image_branch) {
        Require(l.conv.depthwise_separable, ErrorKind::kConfig,
                "student image branch must use depthwise-separable convolutions only");
      }
      for (const auto& l : text.convs) {
        Require(l.conv.depthwise_separable, ErrorKind::kConfig,
                "student text convolutions must be depthwise-separable");
      }
    }
    Require(text.vocab_size >= 2 && text.embed_dim >= 1 && text.max_question_len >= 1,
            ErrorKind::kConfig, "text branch dimensions must be positive (vocab >= 2)");
    std::size_t text_channels = text.embed_dim;
    for (const auto& l : text.convs) {
      Require(l.conv.kernel_w == 1 && l.conv.stride == 1 && l.conv.padding == nn::Padding::kSame &&
                  l.pool == 0,
              ErrorKind::kConfig, "text convolutions must be k x 1, stride 1, same padding, no pool");
      Require(l.conv.in_channels == text_channels, ErrorKind::kConfig, "text conv channel mismatch");
      text_channels = l.conv.out_channels;
    }
    Require(text.lstm.input_dim == text_channels, ErrorKind::kConfig,
            "lstm input_dim must equal the text feature width " + std::to_string(text_channels));
    Require(text.lstm.hidden_dim >= 1 && text.lstm.num_layers >= 1, ErrorKind::kConfig,
            "lstm dimensions must be positive");
    Require(fusion.factor >= 1 && fusion.joint_dim >= fusion.factor &&
                fusion.joint_dim % fusion.factor == 0,
            ErrorKind::kConfig, "fusion joint_dim must be a positive multiple of factor");
    Require(fusion.dropout_rate >= 0.0 && fusion.dropout_rate < 1.0, ErrorKind::kConfig,
            "dropout rate must lie in [0, 1)");
    Require(num_answers >= 1, ErrorKind::kConfig, "num_answers must be positive");
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kConfig) throw;
    throw Error(ErrorKind::kConfig, e.what());
  }
}

GraphSpec GraphSpec::DefaultStudent() {
  GraphSpec s;
  s.role = ModelRole::kStudent;
  s.input_h = s.input_w = 64;
  s.input_c = 3;
  s.image_branch = {SeparableStage(3, 16, 2), SeparableStage(16, 32, 2), SeparableStage(32, 64, 2)};
  s.text = TextBranch{};
  s.fusion = FusionSpec{};
  s.grid_h = s.grid_w = 8;
  s.num_answers = 16;
  return s;
}

GraphSpec GraphSpec::DefaultTeacher() {
  GraphSpec s;
  s.role = ModelRole::kTeacher;
  s.input_h = s.input_w = 64;
  s.input_c = 3;
  s.image_branch = {RegularStage(3, 32, 2), RegularStage(32, 64, 2), RegularStage(64, 128, 0)};
  s.text.vocab_size = 512;
  s.text.embed_dim = 64;
  s.text.lstm = {64, 128, 2};
  s.fusion = {640, 5, 0.1};
  s.grid_h = s.grid_w = 16;
  s.num_answers = 16;
  return s;
}

GraphSpec GraphSpec::Teacher224(std::size_t grid_channels, std::size_t channel_cap) {
  GraphSpec s = DefaultTeacher();
  s.input_h = s.input_w = 224;
  s.image_branch.clear();
  std::size_t cin = 3;
  for (std::size_t stage = 0; stage < 4; ++stage) {
    const std::size_t cout = std::min<std::size_t>(64u << stage, channel_cap);
    s.image_branch.push_back(RegularStage(cin, cout, 2));
    cin = cout;
  }
  s.image_branch.push_back(RegularStage(cin, grid_channels, 0));
  s.grid_h = s.grid_w = 14;
  return s;
}

std::vector<ParamInfo> ParameterLayout(const GraphSpec& spec) {
  std::vector<ParamInfo> out;
  for (std::size_t i = 0; i < spec.image_branch.size(); ++i) {
    AddConvParams(out, "img." + std::to_string(i), spec.image_branch[i].conv);
  }
  out.push_back({"txt.emb", Shape{spec.text.vocab_size, spec.text.embed_dim},
                 ParamInfo::Kind::kEmbedding, 1});
  for (std::size_t i = 0; i < spec.text.convs.size(); ++i) {
    AddConvParams(out, "txt.conv." + std::to_string(i), spec.text.convs[i].conv);
  }
  const auto& lstm = spec.text.lstm;
  for (std::size_t l = 0; l < lstm.num_layers; ++l) {
    const std::string p = "txt.lstm." + std::to_string(l);
    const std::size_t in = l == 0 ? lstm.input_dim : lstm.hidden_dim;
    out.push_back({p + ".w_ih", Shape{4 * lstm.hidden_dim, in}, ParamInfo::Kind::kLstmWeight,
                   lstm.hidden_dim});
    out.push_back({p + ".w_hh", Shape{4 * lstm.hidden_dim, lstm.hidden_dim},
                   ParamInfo::Kind::kLstmWeight, lstm.hidden_dim});
    out.push_back({p + ".b", Shape{4 * lstm.hidden_dim}, ParamInfo::Kind::kLstmBias,
                   lstm.hidden_dim});
  }
  const std::size_t c = spec.grid_channels();
  const std::size_t h = lstm.hidden_dim;
  AddDenseParams(out, "fuse.img", spec.fusion.joint_dim, c);
  AddDenseParams(out, "fuse.q", spec.fusion.joint_dim, h);
  AddDenseParams(out, "att", 1, spec.fusion.output_dim());
  AddDenseParams(out, "q.out", c, h);
  AddDenseParams(out, "cls", spec.num_answers, c);
  return out;
}

nlohmann::ordered_json GraphSpecToJson(const GraphSpec& spec) {
  ordered_json image = ordered_json::array();
  for (const auto& l : spec.image_branch) image.push_back(ConvLayerToJson(l));
  ordered_json text_convs = ordered_json::array();
  for (const auto& l : spec.text.convs) text_convs.push_back(ConvLayerToJson(l));
  return {
      {"role", std::string(RoleName(spec.role))},
      {"input", {spec.input_h, spec.input_w, spec.input_c}},
      {"image_branch", image},
      {"text",
       {{"vocab_size", spec.text.vocab_size},
        {"embed_dim", spec.text.embed_dim},
        {"max_question_len", spec.text.max_question_len},
        {"convs", text_convs},
        {"lstm",
         {{"input_dim", spec.text.lstm.input_dim},
          {"hidden_dim", spec.text.lstm.hidden_dim},
          {"num_layers", spec.text.lstm.num_layers}}}}},
      {"fusion",
       {{"joint_dim", spec.fusion.joint_dim},
        {"factor", spec.fusion.factor},
        {"dropout_rate", spec.fusion.dropout_rate}}},
      {"attention_grid", {spec.grid_h, spec.grid_w}},
      {"num_answers", spec.num_answers},
  };
}

GraphSpec GraphSpecFromJson(const nlohmann::ordered_json& j) {
  try {
    GraphSpec s;
    s.role = ParseRole(j.at("role").get<std::string>());
    const auto& in = j.at("input");
    Require(in.is_array() && in.size() == 3, ErrorKind::kConfig, "input must be [h, w, c]");
    s.input_h = in[0].get<std::size_t>();
    s.input_w = in[1].get<std::size_t>();
    s.input_c = in[2].get<std::size_t>();
    for (const auto& l : j.at("image_branch")) s.image_branch.push_back(ConvLayerFromJson(l));
    const auto& t = j.at("text");
    s.text.vocab_size = t.at("vocab_size").get<std::size_t>();
    s.text.embed_dim = t.at("embed_dim").get<std::size_t>();
    s.text.max_question_len = t.at("max_question_len").get<std::size_t>();
    s.text.convs.clear();
    for (const auto& l : t.at("convs")) s.text.convs.push_back(ConvLayerFromJson(l));
    const auto& lstm = t.at("lstm");
    s.text.lstm = {lstm.at("input_dim").get<std::size_t>(), lstm.at("hidden_dim").get<std::size_t>(),
                   lstm.at("num_layers").get<std::size_t>()};
    const auto& f = j.at("fusion");
    s.fusion = {f.at("joint_dim").get<std::size_t>(), f.at("factor").get<std::size_t>(),
                f.at("dropout_rate").get<double>()};
    const auto& grid = j.at("attention_grid");
    Require(grid.is_array() && grid.size() == 2, ErrorKind::kConfig, "attention_grid must be [h, w]");
    s.grid_h = grid[0].get<std::size_t>();
    s.grid_w = grid[1].get<std::size_t>();
    s.num_answers = j.at("num_answers").get<std::size_t>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kConfig, std::string("malformed graph spec: ") + e.what());
  }
}

}  // namespace qvqa
