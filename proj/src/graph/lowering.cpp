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

#include "qvqa/lowering.hpp"

#include <algorithm>

namespace qvqa {
namespace {

constexpr std::size_t kBiasBytes = 4;
constexpr std::size_t kInt32Bytes = 4;
constexpr std::size_t kFloatBytes = 4;

struct Builder {
  const GraphSpec& spec;
  std::size_t eb;  // activation/weight element bytes
  LoweredGraph graph;

  void Add(LayerDesc d) {
    graph.tensor_bytes[d.name] = d.OutputTensorBytes();
    graph.model_bytes += d.weight_bytes;
    graph.layers.push_back(std::move(d));
  }

  // Convolution over a [h, w, c] map; returns the output name.
  std::string ConvStage(const std::string& prefix, const ConvLayer& layer, const std::string& input,
                        std::size_t h, std::size_t w, bool tiled, std::size_t* out_h,
                        std::size_t* out_w) {
    const auto& c = layer.conv;
    const auto g = nn::ResolveGeometry(h, w, c.kernel_h, c.kernel_w, c.stride, c.padding);
    auto base = [&](LayerDesc& d) {
      d.in_h = h;
      d.in_w = w;
      d.out_h = g.out_h;
      d.out_w = g.out_w;
      d.out_rows = g.out_h;
      d.row_tiled = tiled;
    };
    std::string current = input;
    if (c.depthwise_separable) {
      LayerDesc dw;
      dw.name = prefix + ".dw";
      dw.kind = LayerKind::kDepthwise;
      dw.inputs = {current};
      dw.weight = prefix + ".dw.w";
      dw.bias = prefix + ".dw.b";
      base(dw);
      dw.in_c = dw.out_c = c.in_channels;
      dw.kernel_h = c.kernel_h;
      dw.kernel_w = c.kernel_w;
      dw.stride = c.stride;
      dw.pad_top = g.pad_top;
      dw.pad_left = g.pad_left;
      dw.in_row_bytes = w * c.in_channels * eb;
      dw.out_row_bytes = g.out_w * c.in_channels * eb;
      dw.weight_bytes = c.kernel_h * c.kernel_w * c.in_channels * eb + c.in_channels * kBiasBytes;
      dw.macs_per_row = g.out_w * c.kernel_h * c.kernel_w * c.in_channels;
      current = dw.name;
      Add(std::move(dw));

      LayerDesc pw;
      pw.name = prefix;
      pw.kind = LayerKind::kConv;
      pw.inputs = {current};
      pw.weight = prefix + ".pw.w";
      pw.bias = prefix + ".pw.b";
      base(pw);
      pw.in_h = g.out_h;
      pw.in_w = g.out_w;
      pw.in_c = c.in_channels;
      pw.out_c = c.out_channels;
      pw.relu = layer.relu;
      pw.in_row_bytes = g.out_w * c.in_channels * eb;
      pw.out_row_bytes = g.out_w * c.out_channels * eb;
      pw.weight_bytes = c.in_channels * c.out_channels * eb + c.out_channels * kBiasBytes;
      pw.macs_per_row = g.out_w * c.in_channels * c.out_channels;
      current = pw.name;
      Add(std::move(pw));
    } else {
      LayerDesc d;
      d.name = prefix;
      d.kind = LayerKind::kConv;
      d.inputs = {current};
      d.weight = prefix + ".w";
      d.bias = prefix + ".b";
      base(d);
      d.in_c = c.in_channels;
      d.out_c = c.out_channels;
      d.kernel_h = c.kernel_h;
      d.kernel_w = c.kernel_w;
      d.stride = c.stride;
      d.pad_top = g.pad_top;
      d.pad_left = g.pad_left;
      d.relu = layer.relu;
      d.in_row_bytes = w * c.in_channels * eb;
      d.out_row_bytes = g.out_w * c.out_channels * eb;
      d.weight_bytes = c.kernel_h * c.kernel_w * c.in_channels * c.out_channels * eb +
                       c.out_channels * kBiasBytes;
      d.macs_per_row = g.out_w * c.kernel_h * c.kernel_w * c.in_channels * c.out_channels;
      current = d.name;
      Add(std::move(d));
    }
    *out_h = g.out_h;
    *out_w = g.out_w;
    if (layer.pool > 0) {
      LayerDesc p;
      p.name = prefix + ".pool";
      p.kind = LayerKind::kMaxPool;
      p.inputs = {current};
      p.in_h = g.out_h;
      p.in_w = g.out_w;
      p.in_c = p.out_c = c.out_channels;
      p.kernel_h = p.kernel_w = p.stride = layer.pool;
      p.out_h = p.out_rows = (g.out_h - layer.pool) / layer.pool + 1;
      p.out_w = (g.out_w - layer.pool) / layer.pool + 1;
      p.row_tiled = tiled;
      p.in_row_bytes = g.out_w * c.out_channels * eb;
      p.out_row_bytes = p.out_w * c.out_channels * eb;
      p.macs_per_row = p.out_w * c.out_channels * layer.pool * layer.pool;
      current = p.name;
      *out_h = p.out_h;
      *out_w = p.out_w;
      Add(std::move(p));
    }
    return current;
  }

  // Per-cell dense over a [h, w, n] grid.
  void CellDense(const std::string& name, const std::string& input, const std::string& param,
                 std::size_t n, std::size_t m) {
    LayerDesc d;
    d.name = name;
    d.kind = LayerKind::kCellDense;
    d.inputs = {input};
    d.weight = param + ".w";
    d.bias = param + ".b";
    d.in_h = d.out_h = d.out_rows = spec.grid_h;
    d.in_w = d.out_w = spec.grid_w;
    d.in_c = n;
    d.out_c = m;
    d.in_row_bytes = spec.grid_w * n * eb;
    d.out_row_bytes = spec.grid_w * m * eb;
    d.weight_bytes = m * n * eb + m * kBiasBytes;
    d.macs_per_row = spec.grid_w * m * n;
    Add(std::move(d));
  }

  void Dense(const std::string& name, const std::string& input, const std::string& param,
             std::size_t n, std::size_t m) {
    LayerDesc d;
    d.name = name;
    d.kind = LayerKind::kDense;
    d.inputs = {input};
    d.weight = param + ".w";
    d.bias = param + ".b";
    d.in_c = n;
    d.out_c = m;
    d.out_h = d.out_rows = m;
    d.out_row_bytes = eb;
    d.in_fixed_bytes = n * eb;
    d.weight_row_bytes = n * eb + kBiasBytes;
    d.weight_bytes = m * d.weight_row_bytes;
    d.macs_per_row = n;
    Add(std::move(d));
  }
};

}  // namespace

std::string_view LayerKindName(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kDepthwise: return "depthwise";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kEmbed: return "embed";
    case LayerKind::kLstm: return "lstm";
    case LayerKind::kCellDense: return "cell_dense";
    case LayerKind::kDense: return "dense";
    case LayerKind::kMulBroadcast: return "mul_broadcast";
    case LayerKind::kSumPool: return "sum_pool";
    case LayerKind::kNormalize: return "normalize";
    case LayerKind::kSoftmax: return "softmax";
    case LayerKind::kAttentionPool: return "attention_pool";
    case LayerKind::kAdd: return "add";
    case LayerKind::kAnswer: return "answer";
  }
  return "unknown";
}

std::size_t LayerDesc::halo_rows() const {
  if (in_row_bytes == 0 || !row_tiled) return 0;
  return kernel_h > stride ? kernel_h - stride : 0;
}

std::pair<std::size_t, std::size_t> LayerDesc::InputRows(std::size_t o0, std::size_t o1) const {
  if (in_row_bytes == 0) return {0, 0};
  const auto lo = static_cast<std::ptrdiff_t>(o0 * stride) - static_cast<std::ptrdiff_t>(pad_top);
  const auto hi = static_cast<std::ptrdiff_t>((o1 - 1) * stride + kernel_h) -
                  static_cast<std::ptrdiff_t>(pad_top);
  const auto first = static_cast<std::size_t>(std::max<std::ptrdiff_t>(lo, 0));
  const auto last = static_cast<std::size_t>(
      std::clamp<std::ptrdiff_t>(hi, 0, static_cast<std::ptrdiff_t>(in_h)));
  return {first, std::max(first, last)};
}

std::size_t LayerDesc::InputBytes(std::size_t o0, std::size_t o1) const {
  const auto [first, last] = InputRows(o0, o1);
  return (last - first) * in_row_bytes + in_fixed_bytes;
}

std::size_t LayerDesc::MaxInputBytes(std::size_t rows) const {
  if (in_row_bytes == 0) return in_fixed_bytes;
  const std::size_t need = std::min(in_h, (rows - 1) * stride + kernel_h);
  return need * in_row_bytes + in_fixed_bytes;
}

std::size_t LayerDesc::OutputBytes(std::size_t o0, std::size_t o1) const {
  return (o1 - o0) * out_row_bytes + (o1 == out_rows ? out_final_bytes : 0);
}

std::size_t LayerDesc::MaxOutputBytes(std::size_t rows) const {
  return rows * out_row_bytes + out_final_bytes;
}

std::size_t LayerDesc::WeightTileBytes(std::size_t rows) const {
  return (weight_row_bytes > 0 ? rows * weight_row_bytes : weight_bytes) + scratch_bytes;
}

LoweredGraph LowerGraph(const GraphSpec& spec, std::size_t element_bytes) {
  spec.Validate();
  Require(element_bytes == 1 || element_bytes == 4, ErrorKind::kConfig,
          "element size must be 1 (int8) or 4 (float32)");
  Builder b{spec, element_bytes, {}};
  const std::size_t eb = element_bytes;
  b.graph.tensor_bytes["input"] = spec.input_h * spec.input_w * spec.input_c * eb;

  std::string current = "input";
  std::size_t h = spec.input_h, w = spec.input_w;
  for (std::size_t i = 0; i < spec.image_branch.size(); ++i) {
    current = b.ConvStage("img." + std::to_string(i), spec.image_branch[i], current, h, w, true, &h, &w);
  }
  const std::string grid = current;
  const std::size_t c = spec.grid_channels();

  const std::size_t seq = spec.text.max_question_len;
  const std::size_t embed = spec.text.embed_dim;
  b.graph.tensor_bytes["tokens"] = seq * kInt32Bytes;
  {
    LayerDesc d;
    d.name = "txt.emb";
    d.kind = LayerKind::kEmbed;
    d.inputs = {"tokens"};
    d.weight = "txt.emb";
    d.in_h = d.out_h = d.out_rows = seq;
    d.in_c = d.out_c = embed;
    d.row_tiled = false;
    d.in_fixed_bytes = seq * kInt32Bytes + seq * embed * eb;  // ids + gathered rows
    d.out_row_bytes = embed * eb;
    d.macs_per_row = embed;
    b.Add(std::move(d));
    // The table stays in L2; only gathered rows travel.
    b.graph.model_bytes += spec.text.vocab_size * embed * eb;
  }
  std::string text = "txt.emb";
  std::size_t th = seq, tw = 1;
  for (std::size_t i = 0; i < spec.text.convs.size(); ++i) {
    text = b.ConvStage("txt.conv." + std::to_string(i), spec.text.convs[i], text, th, tw, false, &th, &tw);
  }
  {
    const auto& lstm = spec.text.lstm;
    LayerDesc d;
    d.name = "txt.out";
    d.kind = LayerKind::kLstm;
    d.inputs = {text};
    d.in_h = seq;
    d.in_c = lstm.input_dim;
    d.out_c = lstm.hidden_dim;
    d.row_tiled = false;
    d.float_executed = true;
    d.in_fixed_bytes = seq * lstm.input_dim * eb;
    d.out_row_bytes = lstm.hidden_dim * eb;
    std::size_t macs = 0;
    for (std::size_t l = 0; l < lstm.num_layers; ++l) {
      const std::size_t in = l == 0 ? lstm.input_dim : lstm.hidden_dim;
      d.weight_bytes += 4 * lstm.hidden_dim * (in + lstm.hidden_dim) * eb + 4 * lstm.hidden_dim * kBiasBytes;
      macs += seq * 4 * lstm.hidden_dim * (in + lstm.hidden_dim);
    }
    d.macs_per_row = macs;
    // Gate pre-activations plus cell and hidden state, float32.
    d.scratch_bytes = (4 * lstm.hidden_dim + 2 * lstm.hidden_dim * lstm.num_layers) * kFloatBytes;
    b.Add(std::move(d));
  }

  const std::size_t kf = spec.fusion.joint_dim, k = spec.fusion.output_dim();
  b.CellDense("fuse.img", grid, "fuse.img", c, kf);
  b.Dense("fuse.q", "txt.out", "fuse.q", spec.text.lstm.hidden_dim, kf);
  {
    LayerDesc d;
    d.name = "fuse.expand";
    d.kind = LayerKind::kMulBroadcast;
    d.inputs = {"fuse.img", "fuse.q"};
    d.in_h = d.out_h = d.out_rows = spec.grid_h;
    d.in_w = d.out_w = spec.grid_w;
    d.in_c = d.out_c = kf;
    d.in_row_bytes = spec.grid_w * kf * eb;
    d.in_fixed_bytes = kf * eb;
    d.out_row_bytes = spec.grid_w * kf * eb;
    d.macs_per_row = spec.grid_w * kf;
    b.Add(std::move(d));
  }
  {
    LayerDesc d;
    d.name = "fuse.pool";
    d.kind = LayerKind::kSumPool;
    d.inputs = {"fuse.expand"};
    d.in_h = d.out_h = d.out_rows = spec.grid_h;
    d.in_w = d.out_w = spec.grid_w;
    d.in_c = kf;
    d.out_c = k;
    d.in_row_bytes = spec.grid_w * kf * eb;
    d.out_row_bytes = spec.grid_w * k * kInt32Bytes;
    d.scratch_bytes = 8;  // running sum of |pooled|
    d.macs_per_row = spec.grid_w * kf;
    b.Add(std::move(d));
  }
  {
    LayerDesc d;
    d.name = "fuse.norm";
    d.kind = LayerKind::kNormalize;
    d.inputs = {"fuse.pool"};
    d.in_h = d.out_h = d.out_rows = spec.grid_h;
    d.in_w = d.out_w = spec.grid_w;
    d.in_c = d.out_c = k;
    d.in_row_bytes = spec.grid_w * k * kInt32Bytes;
    d.out_row_bytes = spec.grid_w * k * eb;
    d.macs_per_row = spec.grid_w * k;
    d.float_executed = true;
    b.Add(std::move(d));
  }
  b.CellDense("att.logits", "fuse.norm", "att", k, 1);
  const std::size_t cells = spec.grid_h * spec.grid_w;
  {
    LayerDesc d;
    d.name = "att.probs";
    d.kind = LayerKind::kSoftmax;
    d.inputs = {"att.logits"};
    d.in_h = d.out_h = spec.grid_h;
    d.in_w = d.out_w = spec.grid_w;
    d.row_tiled = false;
    d.float_executed = true;
    d.in_fixed_bytes = cells * eb;
    d.out_row_bytes = cells * eb;
    d.macs_per_row = cells;
    d.scratch_bytes = cells * kFloatBytes;
    b.Add(std::move(d));
  }
  {
    LayerDesc d;
    d.name = "att.pooled";
    d.kind = LayerKind::kAttentionPool;
    d.inputs = {"att.probs", grid};
    d.in_h = d.out_rows = spec.grid_h;
    d.in_w = spec.grid_w;
    d.in_c = c;
    d.out_c = c;
    d.in_row_bytes = spec.grid_w * (c + 1) * eb;  // features plus one weight per cell
    d.out_final_bytes = c * eb;
    d.scratch_bytes = c * kInt32Bytes;
    d.macs_per_row = spec.grid_w * c;
    b.Add(std::move(d));
  }
  b.Dense("q.out", "txt.out", "q.out", spec.text.lstm.hidden_dim, c);
  {
    LayerDesc d;
    d.name = "joint";
    d.kind = LayerKind::kAdd;
    d.inputs = {"att.pooled", "q.out"};
    d.in_c = d.out_c = c;
    d.row_tiled = false;
    d.in_fixed_bytes = 2 * c * eb;
    d.out_row_bytes = c * eb;
    d.macs_per_row = c;
    b.Add(std::move(d));
  }
  b.Dense("cls.logits", "joint", "cls", c, spec.num_answers);
  {
    LayerDesc d;
    d.name = "answer";
    d.kind = LayerKind::kAnswer;
    d.inputs = {"cls.logits"};
    d.in_c = d.out_c = spec.num_answers;
    d.row_tiled = false;
    d.float_executed = true;
    d.in_fixed_bytes = spec.num_answers * eb;
    d.out_row_bytes = spec.num_answers * kFloatBytes;
    d.macs_per_row = spec.num_answers;
    b.Add(std::move(d));
  }
  return std::move(b.graph);
}

}  // namespace qvqa
