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

#include <algorithm>
#include <cmath>
#include <limits>

#include "qvqa/kernels_int.hpp"
#include "qvqa/model.hpp"

namespace qvqa {
namespace {

std::string StageOutputName(const std::string& prefix, const ConvLayer& layer) {
  return layer.pool > 0 ? prefix + ".pool" : prefix;
}

// Activation name feeding image stage i.
std::string ImageStageInput(const GraphSpec& s, std::size_t i) {
  if (i == 0) return "input";
  return StageOutputName("img." + std::to_string(i - 1), s.image_branch[i - 1]);
}

std::string TextStageInput(std::size_t i) {
  return i == 0 ? "txt.emb" : "txt.conv." + std::to_string(i - 1);
}

std::string GridName(const GraphSpec& s) {
  const std::size_t last = s.image_branch.size() - 1;
  return StageOutputName("img." + std::to_string(last), s.image_branch[last]);
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void Update(const RealTensor& t) {
    for (double v : t.data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
};

QuantTensor RunStageQ(const QuantModel& m, const std::string& prefix, const ConvLayer& layer,
                      const QuantTensor& input, QuantTrace* trace) {
  const auto& conv = layer.conv;
  const auto g = nn::ResolveGeometry(input.shape()[0], input.shape()[1], conv.kernel_h,
                                     conv.kernel_w, conv.stride, conv.padding);
  const auto window = nn::WindowFor(g, conv.kernel_h, conv.kernel_w, conv.stride);
  QuantTensor out;
  if (conv.depthwise_separable) {
    QuantTensor spatial = nn::DepthwiseConv2dQ(input, m.weight(prefix + ".dw.w"),
                                               m.bias(prefix + ".dw.b"), window,
                                               m.activation(prefix + ".dw"), false);
    const nn::QuantWindow pointwise{g.out_h, g.out_w, 1, 1, 1, 0, 0};
    out = nn::Conv2dQ(spatial, m.weight(prefix + ".pw.w"), m.bias(prefix + ".pw.b"), pointwise,
                      m.activation(prefix), layer.relu);
    if (trace) trace->tensors[prefix + ".dw"] = std::move(spatial);
  } else {
    out = nn::Conv2dQ(input, m.weight(prefix + ".w"), m.bias(prefix + ".b"), window,
                      m.activation(prefix), layer.relu);
  }
  if (layer.pool > 0) {
    if (trace) trace->tensors[prefix] = out;
    out = nn::MaxPool2dQ(out, layer.pool, layer.pool);
  }
  if (trace) trace->tensors[StageOutputName(prefix, layer)] = out;
  return out;
}

}  // namespace

const QuantTensor& QuantModel::weight(const std::string& name) const {
  const auto it = weights.find(name);
  if (it == weights.end()) {
    Fail(ErrorKind::kConfig, "quantized model has no weight '" + name + "'");
  }
  return it->second;
}

const BiasTensor& QuantModel::bias(const std::string& name) const {
  const auto it = biases.find(name);
  if (it == biases.end()) Fail(ErrorKind::kConfig, "quantized model has no bias '" + name + "'");
  return it->second;
}

const QuantParams& QuantModel::activation(const std::string& name) const {
  const auto it = activations.find(name);
  if (it == activations.end()) {
    Fail(ErrorKind::kConfig, "quantized model has no activation parameters for '" + name + "'");
  }
  return it->second;
}

QuantModel QuantizeModel(const Model& model, std::span<const CalibrationSample> calibration) {
  Require(!calibration.empty(), ErrorKind::kConfig, "calibration batch is empty");
  const GraphSpec& s = model.spec;
  QuantModel qm;
  qm.spec = s;

  std::map<std::string, Range> ranges;
  for (const auto& sample : calibration) {
    ForwardTrace trace;
    ForwardVqa(model, sample.image, sample.tokens, {}, &trace);
    for (const auto& [name, tensor] : TraceActivations(trace, s)) ranges[name].Update(*tensor);
  }
  for (const auto& [name, r] : ranges) {
    qm.activations[name] = ChooseQParamsFromRange(r.lo, r.hi, false);
  }

  const auto layout = ParameterLayout(s);
  for (const auto& info : layout) {
    if (info.kind == ParamInfo::Kind::kBias || info.kind == ParamInfo::Kind::kLstmBias) continue;
    const RealTensor& w = model.param(info.name);
    qm.weights[info.name] = Quantize(w, ChooseQParams(w, true));
  }
  qm.activations["txt.emb"] = qm.weights.at("txt.emb").qparams;
  for (std::size_t i = 0; i < s.image_branch.size(); ++i) {
    if (s.image_branch[i].pool > 0) {
      const std::string p = "img." + std::to_string(i);
      qm.activations[p + ".pool"] = qm.activations.at(p);
    }
  }
  qm.activations["fuse.norm"] = nn::NormalizedQParams();
  qm.activations["att.probs"] = nn::ProbabilityQParams();

  // Input activation of every biased layer, which fixes its bias scale.
  std::map<std::string, std::string> bias_input;
  for (std::size_t i = 0; i < s.image_branch.size(); ++i) {
    const std::string p = "img." + std::to_string(i);
    if (s.image_branch[i].conv.depthwise_separable) {
      bias_input[p + ".dw.b"] = ImageStageInput(s, i);
      bias_input[p + ".pw.b"] = p + ".dw";
    } else {
      bias_input[p + ".b"] = ImageStageInput(s, i);
    }
  }
  for (std::size_t i = 0; i < s.text.convs.size(); ++i) {
    const std::string p = "txt.conv." + std::to_string(i);
    if (s.text.convs[i].conv.depthwise_separable) {
      bias_input[p + ".dw.b"] = TextStageInput(i);
      bias_input[p + ".pw.b"] = p + ".dw";
    } else {
      bias_input[p + ".b"] = TextStageInput(i);
    }
  }
  bias_input["fuse.img.b"] = GridName(s);
  bias_input["fuse.q.b"] = "txt.out";
  bias_input["att.b"] = "fuse.norm";
  bias_input["q.out.b"] = "txt.out";
  bias_input["cls.b"] = "joint";

  for (const auto& info : layout) {
    const RealTensor& b = model.param(info.name);
    if (info.kind == ParamInfo::Kind::kLstmBias) {
      qm.biases[info.name] = QuantizeBias(b, kLstmBiasScale);
    } else if (info.kind == ParamInfo::Kind::kBias) {
      const std::string weight_name = info.name.substr(0, info.name.size() - 1) + "w";
      const double scale = qm.activations.at(bias_input.at(info.name)).scale *
                           qm.weights.at(weight_name).qparams.scale;
      qm.biases[info.name] = QuantizeBias(b, scale);
    }
  }
  return qm;
}

std::vector<nn::LstmLayerWeights> DequantizedLstm(const QuantModel& m) {
  std::vector<nn::LstmLayerWeights> out;
  for (std::size_t l = 0; l < m.spec.text.lstm.num_layers; ++l) {
    const std::string p = "txt.lstm." + std::to_string(l);
    out.push_back({Dequantize(m.weight(p + ".w_ih")), Dequantize(m.weight(p + ".w_hh")),
                   DequantizeBias(m.bias(p + ".b"))});
  }
  return out;
}

VqaOutput ForwardVqa(const QuantModel& m, const RealTensor& image,
                     std::span<const std::int32_t> token_ids, QuantTrace* trace) {
  return ForwardVqa(m, Quantize(image, m.activation("input")), token_ids, trace);
}

VqaOutput ForwardVqa(const QuantModel& m, const QuantTensor& image,
                     std::span<const std::int32_t> token_ids, QuantTrace* trace) {
  const GraphSpec& s = m.spec;
  RequireShape(image.shape(), Shape{s.input_h, s.input_w, s.input_c}, "image");
  Require(image.qparams == m.activation("input"), ErrorKind::kInvalidScale,
          "image quantization parameters differ from the model's input parameters");
  if (trace) *trace = QuantTrace{};

  QuantTensor x = image;
  for (std::size_t i = 0; i < s.image_branch.size(); ++i) {
    x = RunStageQ(m, "img." + std::to_string(i), s.image_branch[i], x, trace);
  }
  const QuantTensor grid = std::move(x);

  // Text branch: integer embedding (and optional convolutions), then the
  // recurrence runs in floating point on dequantized weights.
  const auto tokens = ActiveTokens(token_ids, s);
  const std::size_t seq = tokens.size(), embed = s.text.embed_dim;
  const QuantTensor& table = m.weight("txt.emb");
  Tensor<std::int8_t> gathered(Shape{seq, 1, embed});
  for (std::size_t i = 0; i < seq; ++i) {
    std::copy_n(&table.values[static_cast<std::size_t>(tokens[i]) * embed], embed, &gathered[i * embed]);
  }
  QuantTensor text{std::move(gathered), table.qparams};
  if (trace) trace->tensors["txt.emb"] = text;
  for (std::size_t i = 0; i < s.text.convs.size(); ++i) {
    text = RunStageQ(m, "txt.conv." + std::to_string(i), s.text.convs[i], text, trace);
  }
  const RealTensor text_real = Dequantize(text);
  const RealTensor question_real = nn::LstmSequence(
      text_real.Reshaped(Shape{seq, text_real.dim(2)}), s.text.lstm, DequantizedLstm(m));
  const QuantTensor question = Quantize(question_real, m.activation("txt.out"));

  const QuantTensor img_proj = nn::CellDenseQ(grid, m.weight("fuse.img.w"), m.bias("fuse.img.b"),
                                              m.activation("fuse.img"), false);
  const QuantTensor q_proj = nn::DenseQ(question, m.weight("fuse.q.w"), m.bias("fuse.q.b"),
                                        m.activation("fuse.q"), false);
  const QuantTensor expanded = nn::MulBroadcastQ(img_proj, q_proj, m.activation("fuse.expand"));
  Tensor<std::int32_t> pooled = nn::SumPoolQ(expanded, s.fusion.factor);
  const QuantTensor normalized =
      nn::PowerNormalizeQ(pooled, expanded.qparams.scale, nn::AbsSum(pooled));
  const QuantTensor logits = nn::CellDenseQ(normalized, m.weight("att.w"), m.bias("att.b"),
                                            m.activation("att.logits"), false);

  const std::size_t cells = s.grid_h * s.grid_w;
  const RealTensor attention_logits = Dequantize(logits).Reshaped(Shape{cells});
  const RealTensor attention = nn::SoftmaxWithTemperature(attention_logits, 1.0);
  const QuantTensor attention_q = Quantize(attention, nn::ProbabilityQParams());

  std::vector<std::int32_t> acc(grid.shape()[2], 0);
  nn::AttentionPoolAccumulate(attention_q, grid, acc);
  const QuantTensor attended = nn::AttentionPoolFinalize(
      acc, attention_q.qparams.scale, grid.qparams.scale, m.activation("att.pooled"));
  const QuantTensor question_out = nn::DenseQ(question, m.weight("q.out.w"), m.bias("q.out.b"),
                                              m.activation("q.out"), false);
  const QuantTensor joint = nn::AddQ(attended, question_out, m.activation("joint"));
  const QuantTensor answer = nn::DenseQ(joint, m.weight("cls.w"), m.bias("cls.b"),
                                        m.activation("cls.logits"), false);
  const RealTensor answer_logits = Dequantize(answer);
  RealTensor probs = nn::SoftmaxWithTemperature(answer_logits, 1.0);

  if (trace) {
    auto& t = trace->tensors;
    t["txt.out"] = question;
    t["fuse.img"] = img_proj;
    t["fuse.q"] = q_proj;
    t["fuse.expand"] = expanded;
    t["fuse.norm"] = normalized;
    t["att.logits"] = logits;
    t["att.probs"] = attention_q;
    t["att.pooled"] = attended;
    t["q.out"] = question_out;
    t["joint"] = joint;
    t["cls.logits"] = answer;
    trace->pooled = std::move(pooled);
    trace->question_float = question_real;
  }
  return {answer_logits, std::move(probs), attention_logits,
          AttentionMap{attention.Reshaped(Shape{s.grid_h, s.grid_w})}};
}

}  // namespace qvqa
