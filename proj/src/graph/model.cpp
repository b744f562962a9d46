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

#include "qvqa/model.hpp"

#include <cmath>
#include <random>

namespace qvqa {
namespace {

double UniformDraw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

ForwardTrace::ConvStage RunConvStage(const Model& model, const std::string& prefix,
                                     const ConvLayer& layer, const RealTensor& input) {
  ForwardTrace::ConvStage stage;
  stage.input = input;
  RealTensor pre;
  if (layer.conv.depthwise_separable) {
    stage.spatial = nn::DepthwiseConv2d(input, model.param(prefix + ".dw.w"),
                                        model.param(prefix + ".dw.b"), layer.conv);
    const nn::ConvSpec pointwise{1, 1, 1, nn::Padding::kValid, layer.conv.in_channels,
                                 layer.conv.out_channels, false};
    pre = nn::Conv2d(stage.spatial, model.param(prefix + ".pw.w"), model.param(prefix + ".pw.b"),
                     pointwise);
  } else {
    pre = nn::Conv2d(input, model.param(prefix + ".w"), model.param(prefix + ".b"), layer.conv);
  }
  stage.activated = layer.relu ? nn::Relu(pre) : std::move(pre);
  stage.output = layer.pool > 0 ? nn::MaxPool2d(stage.activated, layer.pool, layer.pool)
                                : stage.activated;
  return stage;
}

std::vector<nn::LstmLayerWeights> LstmWeights(const Model& model) {
  std::vector<nn::LstmLayerWeights> out;
  for (std::size_t l = 0; l < model.spec.text.lstm.num_layers; ++l) {
    const std::string p = "txt.lstm." + std::to_string(l);
    out.push_back({model.param(p + ".w_ih"), model.param(p + ".w_hh"), model.param(p + ".b")});
  }
  return out;
}

}  // namespace

const RealTensor& Model::param(const std::string& name) const {
  const auto it = params.find(name);
  if (it == params.end()) Fail(ErrorKind::kConfig, "model has no parameter '" + name + "'");
  return it->second;
}

std::size_t Model::ParameterCount() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

std::size_t Model::Int8SizeEstimate() const {
  constexpr std::size_t kRecordOverhead = 48;
  std::size_t bytes = 0;
  for (const auto& info : ParameterLayout(spec)) {
    const bool is_bias = info.kind == ParamInfo::Kind::kBias || info.kind == ParamInfo::Kind::kLstmBias;
    bytes += info.shape.numel() * (is_bias ? 4 : 1) + kRecordOverhead;
  }
  return bytes;
}

Model BuildModel(const GraphSpec& spec, std::uint64_t seed) {
  spec.Validate();
  Model model{spec, {}};
  std::mt19937_64 rng(seed);
  for (const auto& info : ParameterLayout(spec)) {
    RealTensor t(info.shape);
    switch (info.kind) {
      case ParamInfo::Kind::kBias:
        break;
      case ParamInfo::Kind::kLstmBias: {
        const std::size_t h = spec.text.lstm.hidden_dim;
        for (std::size_t k = h; k < 2 * h; ++k) t[k] = 1.0;  // forget gate
        break;
      }
      case ParamInfo::Kind::kEmbedding:
      case ParamInfo::Kind::kWeight:
      case ParamInfo::Kind::kLstmWeight: {
        // Conv weights feed a ReLU and get the matching sqrt(6) gain.
        const bool conv = info.name.starts_with("img.") || info.name.starts_with("txt.conv.");
        const double bound = (conv ? std::sqrt(6.0) : 1.0) / std::sqrt(static_cast<double>(info.fan_in));
        for (auto& v : t.data()) v = (2.0 * UniformDraw(rng) - 1.0) * bound;
        if (info.kind == ParamInfo::Kind::kEmbedding) {
          for (std::size_t k = 0; k < info.shape[1]; ++k) t[k] = 0.0;  // padding row
        }
        break;
      }
    }
    model.params.emplace(info.name, std::move(t));
  }
  return model;
}

void ValidateParams(const GraphSpec& spec, const std::map<std::string, RealTensor>& params) {
  const auto layout = ParameterLayout(spec);
  Require(params.size() == layout.size(), ErrorKind::kConfig,
          "expected " + std::to_string(layout.size()) + " parameter tensors, found " +
              std::to_string(params.size()));
  for (const auto& info : layout) {
    const auto it = params.find(info.name);
    Require(it != params.end(), ErrorKind::kConfig, "missing parameter '" + info.name + "'");
    Require(it->second.shape() == info.shape, ErrorKind::kConfig,
            "parameter '" + info.name + "' has shape " + it->second.shape().ToString() +
                ", expected " + info.shape.ToString());
  }
}

RealTensor NormalizeMask(const VisualMask& mask) {
  RealTensor out = mask.mask;
  double total = 0.0;
  for (double v : out.data()) {
    Require(std::isfinite(v) && v >= 0.0, ErrorKind::kInvalidTensor,
            "visual mask must be finite and non-negative");
    total += v;
  }
  const double n = static_cast<double>(out.numel());
  for (auto& v : out.data()) v = total > 0.0 ? v / total : 1.0 / n;
  return out;
}

VisualMask ResampleMask(const VisualMask& mask, std::size_t grid_h, std::size_t grid_w) {
  const RealTensor& m = mask.mask;
  Require(m.rank() == 2, ErrorKind::kShape, "visual mask must be [h, w]");
  if (m.dim(0) == grid_h && m.dim(1) == grid_w) return mask;
  Require(m.dim(0) % grid_h == 0 && m.dim(1) % grid_w == 0, ErrorKind::kShape,
          "mask " + m.shape().ToString() + " cannot be block-averaged onto a " +
              std::to_string(grid_h) + "x" + std::to_string(grid_w) + " grid");
  const std::size_t by = m.dim(0) / grid_h, bx = m.dim(1) / grid_w;
  RealTensor out(Shape{grid_h, grid_w});
  for (std::size_t y = 0; y < m.dim(0); ++y) {
    for (std::size_t x = 0; x < m.dim(1); ++x) {
      out[(y / by) * grid_w + x / bx] += m[y * m.dim(1) + x] / static_cast<double>(by * bx);
    }
  }
  return {std::move(out)};
}

double AttentionLoss(const AttentionMap& predicted, const VisualMask& mask) {
  RequireShape(predicted.weights.shape(), mask.mask.shape(), "attention vs mask grid");
  const RealTensor target = NormalizeMask(mask);
  double sum = 0.0;
  for (std::size_t i = 0; i < target.numel(); ++i) {
    const double d = predicted.weights[i] - target[i];
    sum += d * d;
  }
  return sum / static_cast<double>(target.numel());
}

std::vector<std::int32_t> ActiveTokens(std::span<const std::int32_t> token_ids,
                                       const GraphSpec& spec) {
  std::vector<std::int32_t> active;
  for (std::int32_t id : token_ids) {
    if (id == 0) break;
    Require(id > 0 && static_cast<std::size_t>(id) < spec.text.vocab_size, ErrorKind::kShape,
            "token id " + std::to_string(id) + " outside the embedding table of " +
                std::to_string(spec.text.vocab_size));
    active.push_back(id);
    if (active.size() == spec.text.max_question_len) break;
  }
  Require(!active.empty(), ErrorKind::kEmptyQuestion, "token sequence has no words");
  return active;
}

RealTensor ImageFeatures(const Model& model, const RealTensor& image) {
  const auto& s = model.spec;
  RequireShape(image.shape(), Shape{s.input_h, s.input_w, s.input_c}, "image");
  RealTensor x = image;
  for (std::size_t i = 0; i < s.image_branch.size(); ++i) {
    x = RunConvStage(model, "img." + std::to_string(i), s.image_branch[i], x).output;
  }
  return x;
}

VqaOutput ForwardVqa(const Model& model, const RealTensor& image,
                     std::span<const std::int32_t> token_ids, const ForwardOptions& options,
                     ForwardTrace* trace) {
  const GraphSpec& s = model.spec;
  RequireShape(image.shape(), Shape{s.input_h, s.input_w, s.input_c}, "image");
  ForwardTrace local;
  ForwardTrace& t = trace ? *trace : local;
  t = ForwardTrace{};
  t.image = image;

  RealTensor x = image;
  for (std::size_t i = 0; i < s.image_branch.size(); ++i) {
    t.image_stages.push_back(RunConvStage(model, "img." + std::to_string(i), s.image_branch[i], x));
    x = t.image_stages.back().output;
  }
  t.grid = std::move(x);

  t.tokens = ActiveTokens(token_ids, s);
  const std::size_t seq = t.tokens.size(), embed = s.text.embed_dim;
  const RealTensor& table = model.param("txt.emb");
  t.embedded = RealTensor(Shape{seq, 1, embed});
  for (std::size_t i = 0; i < seq; ++i) {
    std::copy_n(&table[static_cast<std::size_t>(t.tokens[i]) * embed], embed, &t.embedded[i * embed]);
  }
  RealTensor text = t.embedded;
  for (std::size_t i = 0; i < s.text.convs.size(); ++i) {
    t.text_stages.push_back(RunConvStage(model, "txt.conv." + std::to_string(i), s.text.convs[i], text));
    text = t.text_stages.back().output;
  }
  const auto lstm_weights = LstmWeights(model);
  t.question = nn::LstmSequence(text.Reshaped(Shape{seq, text.dim(2)}), s.text.lstm, lstm_weights,
                                &t.lstm);

  const nn::DenseParams img_proj{model.param("fuse.img.w"), model.param("fuse.img.b")};
  const nn::DenseParams q_proj{model.param("fuse.q.w"), model.param("fuse.q.b")};
  t.expanded = nn::MfbExpand(t.grid, t.question, img_proj, q_proj, s.fusion.dropout_rate,
                             options.dropout_seed, options.training, &t.expand);
  t.squeezed = nn::MfbSqueeze(t.expanded, s.fusion.factor, &t.squeeze);
  const RealTensor logits_grid = nn::CellDense(t.squeezed, model.param("att.w"), model.param("att.b"));
  const std::size_t cells = s.grid_h * s.grid_w;
  t.attention_logits = logits_grid.Reshaped(Shape{cells});
  t.attention = nn::SoftmaxWithTemperature(t.attention_logits, 1.0);

  const std::size_t c = t.grid.dim(2);
  t.attended = RealTensor(Shape{c});
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const double a = t.attention[cell];
    for (std::size_t ch = 0; ch < c; ++ch) t.attended[ch] += a * t.grid[cell * c + ch];
  }
  t.question_out = nn::Dense(t.question, model.param("q.out.w"), model.param("q.out.b"));
  t.joint = RealTensor(Shape{c});
  for (std::size_t ch = 0; ch < c; ++ch) t.joint[ch] = t.attended[ch] + t.question_out[ch];
  t.answer_logits = nn::Dense(t.joint, model.param("cls.w"), model.param("cls.b"));
  t.answer_probs = nn::SoftmaxWithTemperature(t.answer_logits, 1.0);

  return {t.answer_logits, t.answer_probs, t.attention_logits,
          AttentionMap{t.attention.Reshaped(Shape{s.grid_h, s.grid_w})}};
}

std::vector<std::pair<std::string, const RealTensor*>> TraceActivations(const ForwardTrace& t,
                                                                        const GraphSpec& spec) {
  std::vector<std::pair<std::string, const RealTensor*>> out;
  out.emplace_back("input", &t.image);
  for (std::size_t i = 0; i < t.image_stages.size(); ++i) {
    const std::string p = "img." + std::to_string(i);
    if (spec.image_branch[i].conv.depthwise_separable) out.emplace_back(p + ".dw", &t.image_stages[i].spatial);
    out.emplace_back(p, &t.image_stages[i].activated);
  }
  for (std::size_t i = 0; i < t.text_stages.size(); ++i) {
    const std::string p = "txt.conv." + std::to_string(i);
    if (spec.text.convs[i].conv.depthwise_separable) out.emplace_back(p + ".dw", &t.text_stages[i].spatial);
    out.emplace_back(p, &t.text_stages[i].activated);
  }
  out.emplace_back("txt.out", &t.question);
  out.emplace_back("fuse.img", &t.expand.image_projected);
  out.emplace_back("fuse.q", &t.expand.question_projected);
  out.emplace_back("fuse.expand", &t.expanded);
  out.emplace_back("att.logits", &t.attention_logits);
  out.emplace_back("att.pooled", &t.attended);
  out.emplace_back("q.out", &t.question_out);
  out.emplace_back("joint", &t.joint);
  out.emplace_back("cls.logits", &t.answer_logits);
  return out;
}

}  // namespace qvqa
