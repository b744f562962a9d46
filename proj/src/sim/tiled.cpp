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
#include <map>

#include "qvqa/kernels_int.hpp"
#include "qvqa/sim.hpp"

namespace qvqa {
namespace {

template <typename T>
Tensor<T> SliceRows(const Tensor<T>& t, std::size_t r0, std::size_t r1) {
  const std::size_t row = t.numel() / t.dim(0);
  std::vector<std::size_t> dims = t.shape().dims();
  dims[0] = r1 - r0;
  std::vector<T> data(t.vec().begin() + static_cast<std::ptrdiff_t>(r0 * row),
                      t.vec().begin() + static_cast<std::ptrdiff_t>(r1 * row));
  return Tensor<T>(Shape(std::move(dims)), std::move(data));
}

QuantTensor SliceRows(const QuantTensor& t, std::size_t r0, std::size_t r1) {
  return {SliceRows(t.values, r0, r1), t.qparams};
}

template <typename T>
void PasteRows(Tensor<T>& dst, const Tensor<T>& src, std::size_t r0) {
  const std::size_t row = dst.numel() / dst.dim(0);
  std::copy(src.data().begin(), src.data().end(), dst.data().begin() + static_cast<std::ptrdiff_t>(r0 * row));
}

// Conv settings of the stage a lowered conv layer belongs to.
const ConvLayer& StageOf(const GraphSpec& s, const std::string& layer) {
  std::string prefix = layer;
  if (prefix.ends_with(".dw")) prefix.resize(prefix.size() - 3);
  if (prefix.starts_with("img.")) return s.image_branch.at(std::stoul(prefix.substr(4)));
  return s.text.convs.at(std::stoul(prefix.substr(9)));
}

class Executor {
 public:
  Executor(const QuantModel& m, const TilePlan& plan) : m_(m), s_(m.spec), plan_(plan) {
    Require(plan.spec == m.spec && plan.element_bytes == 1, ErrorKind::kPlan,
            "tile plan was not made for this model's int8 graph");
    graph_ = LowerGraph(s_, 1);
    ValidatePlan(plan, graph_);
  }

  VqaOutput Run(const QuantTensor& image, std::span<const std::int32_t> token_ids, QuantTrace* trace) {
    RequireShape(image.shape(), Shape{s_.input_h, s_.input_w, s_.input_c}, "image");
    Require(image.qparams == m_.activation("input"), ErrorKind::kInvalidScale,
            "image quantization parameters differ from the model's input parameters");
    acts_.clear();
    acts_["input"] = image;
    tokens_ = ActiveTokens(token_ids, s_);
    for (std::size_t i = 0; i < graph_.layers.size(); ++i) RunLayer(graph_.layers[i], plan_.layers[i]);

    const RealTensor answer_logits = Dequantize(acts_.at("cls.logits"));
    RealTensor probs = nn::SoftmaxWithTemperature(answer_logits, 1.0);
    const RealTensor attention_logits = Dequantize(acts_.at("att.logits")).Reshaped(Shape{s_.grid_h * s_.grid_w});
    const RealTensor attention = nn::SoftmaxWithTemperature(attention_logits, 1.0);
    if (trace) {
      *trace = QuantTrace{};
      for (auto& [name, t] : acts_) {
        if (name != "input") trace->tensors[name] = t;
      }
      trace->pooled = pooled_;
      trace->question_float = question_float_;
    }
    return {answer_logits, std::move(probs), attention_logits,
            AttentionMap{attention.Reshaped(Shape{s_.grid_h, s_.grid_w})}};
  }

 private:
  const QuantTensor& In(const LayerDesc& d, std::size_t i = 0) const { return acts_.at(d.inputs.at(i)); }

  void RunLayer(const LayerDesc& d, const LayerPlan& p) {
    const auto tiles = p.Tiles();
    switch (d.kind) {
      case LayerKind::kConv:
      case LayerKind::kDepthwise:
        if (d.row_tiled) {
          Tiled(d, tiles, Shape{d.out_h, d.out_w, d.out_c}, [&](std::size_t o0, std::size_t o1) {
            const auto [g0, g1] = d.InputRows(o0, o1);
            const nn::QuantWindow w{o1 - o0, d.out_w, d.kernel_h, d.kernel_w, d.stride,
                                    d.pad_top + g0 - o0 * d.stride, d.pad_left};
            return Conv(d, SliceRows(In(d), g0, g1), w);
          });
        } else {
          // Text convolutions run once over the actual question length.
          const auto& c = StageOf(s_, d.name).conv;
          const QuantTensor& x = In(d);
          nn::QuantWindow w{x.shape()[0], x.shape()[1], 1, 1, 1, 0, 0};  // pointwise half
          if (d.kind == LayerKind::kDepthwise || !c.depthwise_separable) {
            const auto g = nn::ResolveGeometry(x.shape()[0], x.shape()[1], c.kernel_h, c.kernel_w,
                                               c.stride, c.padding);
            w = nn::WindowFor(g, c.kernel_h, c.kernel_w, c.stride);
          }
          acts_[d.name] = Conv(d, x, w);
        }
        break;
      case LayerKind::kMaxPool:
        if (d.row_tiled) {
          Tiled(d, tiles, Shape{d.out_h, d.out_w, d.out_c}, [&](std::size_t o0, std::size_t o1) {
            const auto [g0, g1] = d.InputRows(o0, o1);
            return nn::MaxPool2dQ(SliceRows(In(d), g0, g1), d.kernel_h, d.stride);
          });
        } else {
          acts_[d.name] = nn::MaxPool2dQ(In(d), d.kernel_h, d.stride);
        }
        break;
      case LayerKind::kEmbed: {
        const QuantTensor& table = m_.weight("txt.emb");
        const std::size_t embed = s_.text.embed_dim;
        Tensor<std::int8_t> gathered(Shape{tokens_.size(), 1, embed});
        for (std::size_t i = 0; i < tokens_.size(); ++i) {
          std::copy_n(&table.values[static_cast<std::size_t>(tokens_[i]) * embed], embed, &gathered[i * embed]);
        }
        acts_[d.name] = {std::move(gathered), table.qparams};
        break;
      }
      case LayerKind::kLstm: {
        const RealTensor text = Dequantize(In(d));
        question_float_ = nn::LstmSequence(text.Reshaped(Shape{text.dim(0), text.dim(2)}), s_.text.lstm,
                                           DequantizedLstm(m_));
        acts_[d.name] = Quantize(question_float_, m_.activation(d.name));
        break;
      }
      case LayerKind::kCellDense:
        Tiled(d, tiles, Shape{d.out_h, d.out_w, d.out_c}, [&](std::size_t o0, std::size_t o1) {
          return nn::CellDenseQ(SliceRows(In(d), o0, o1), m_.weight(d.weight), m_.bias(d.bias),
                                m_.activation(d.name), d.relu);
        });
        break;
      case LayerKind::kDense:
        Tiled(d, tiles, Shape{d.out_c}, [&](std::size_t o0, std::size_t o1) {
          return nn::DenseQ(In(d), m_.weight(d.weight), m_.bias(d.bias), m_.activation(d.name), d.relu, o0, o1);
        });
        break;
      case LayerKind::kMulBroadcast:
        Tiled(d, tiles, Shape{d.out_h, d.out_w, d.out_c}, [&](std::size_t o0, std::size_t o1) {
          return nn::MulBroadcastQ(SliceRows(In(d, 0), o0, o1), In(d, 1), m_.activation(d.name));
        });
        break;
      case LayerKind::kSumPool: {
        pooled_ = Tensor<std::int32_t>(Shape{d.out_h, d.out_w, d.out_c});
        abs_sum_ = 0;
        for (const auto& [o0, o1] : tiles) {
          const auto part = nn::SumPoolQ(SliceRows(In(d), o0, o1), s_.fusion.factor);
          abs_sum_ += nn::AbsSum(part);
          PasteRows(pooled_, part, o0);
        }
        break;
      }
      case LayerKind::kNormalize: {
        const double scale = acts_.at("fuse.expand").qparams.scale;
        Tiled(d, tiles, Shape{d.out_h, d.out_w, d.out_c}, [&](std::size_t o0, std::size_t o1) {
          return nn::PowerNormalizeQ(SliceRows(pooled_, o0, o1), scale, abs_sum_);
        });
        break;
      }
      case LayerKind::kSoftmax: {
        const std::size_t cells = s_.grid_h * s_.grid_w;
        const RealTensor logits = Dequantize(In(d)).Reshaped(Shape{cells});
        acts_[d.name] = Quantize(nn::SoftmaxWithTemperature(logits, 1.0), nn::ProbabilityQParams());
        break;
      }
      case LayerKind::kAttentionPool: {
        const QuantTensor& probs = In(d, 0);
        const QuantTensor& grid = In(d, 1);
        std::vector<std::int32_t> acc(grid.shape()[2], 0);
        for (const auto& [o0, o1] : tiles) {
          nn::AttentionPoolAccumulate(SliceRows(probs, o0 * d.in_w, o1 * d.in_w), SliceRows(grid, o0, o1), acc);
        }
        acts_[d.name] = nn::AttentionPoolFinalize(acc, probs.qparams.scale, grid.qparams.scale,
                                                  m_.activation(d.name));
        break;
      }
      case LayerKind::kAdd:
        acts_[d.name] = nn::AddQ(In(d, 0), In(d, 1), m_.activation(d.name));
        break;
      case LayerKind::kAnswer:
        break;  // dequantized softmax, done by Run
    }
  }

  QuantTensor Conv(const LayerDesc& d, const QuantTensor& x, const nn::QuantWindow& w) const {
    if (d.kind == LayerKind::kDepthwise) {
      return nn::DepthwiseConv2dQ(x, m_.weight(d.weight), m_.bias(d.bias), w, m_.activation(d.name), d.relu);
    }
    return nn::Conv2dQ(x, m_.weight(d.weight), m_.bias(d.bias), w, m_.activation(d.name), d.relu);
  }

  template <typename F>
  void Tiled(const LayerDesc& d, const std::vector<std::pair<std::size_t, std::size_t>>& tiles,
             const Shape& shape, F&& tile_fn) {
    Tensor<std::int8_t> out(shape);
    QuantParams qp;
    for (const auto& [o0, o1] : tiles) {
      const QuantTensor part = tile_fn(o0, o1);
      Require(part.shape().dims()[0] == o1 - o0, ErrorKind::kPlan,
              "tile of layer '" + d.name + "' produced the wrong row count");
      PasteRows(out, part.values, o0);
      qp = part.qparams;
    }
    acts_[d.name] = {std::move(out), qp};
  }

  const QuantModel& m_;
  const GraphSpec& s_;
  const TilePlan& plan_;
  LoweredGraph graph_;
  std::map<std::string, QuantTensor> acts_;
  std::vector<std::int32_t> tokens_;
  Tensor<std::int32_t> pooled_;
  std::int64_t abs_sum_ = 0;
  RealTensor question_float_;
};

}  // namespace

VqaOutput TiledExecute(const QuantModel& model, const TilePlan& plan, const QuantTensor& image,
                       std::span<const std::int32_t> token_ids, QuantTrace* trace) {
  return Executor(model, plan).Run(image, token_ids, trace);
}

VqaOutput TiledExecute(const QuantModel& model, const TilePlan& plan, const RealTensor& image,
                       std::span<const std::int32_t> token_ids, QuantTrace* trace) {
  return TiledExecute(model, plan, Quantize(image, model.activation("input")), token_ids, trace);
}

}  // namespace qvqa
