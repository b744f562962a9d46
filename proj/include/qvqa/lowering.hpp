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

#ifndef QVQA_LOWERING_HPP_
#define QVQA_LOWERING_HPP_

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qvqa/graph.hpp"

// Integer execution schedule of a GraphSpec: the flat layer list shared by
// the memory planner, the dataflow simulator and the tiled executor.
namespace qvqa {

enum class LayerKind {
  kConv,
  kDepthwise,
  kMaxPool,
  kEmbed,
  kLstm,
  kCellDense,
  kDense,
  kMulBroadcast,
  kSumPool,
  kNormalize,
  kSoftmax,
  kAttentionPool,
  kAdd,
  kAnswer,
};

std::string_view LayerKindName(LayerKind kind);

// Layers are tiled along output rows. For spatial layers a row is one row
// of the output map; for dense layers a row is one output feature, and the
// weights slice by row.
struct LayerDesc {
  std::string name;  // also the name of the produced tensor
  LayerKind kind = LayerKind::kConv;
  std::vector<std::string> inputs;
  std::string weight;  // parameter names, empty when absent
  std::string bias;

  std::size_t in_h = 1, in_w = 1, in_c = 1;
  std::size_t out_h = 1, out_w = 1, out_c = 1;
  std::size_t kernel_h = 1, kernel_w = 1, stride = 1;
  std::size_t pad_top = 0, pad_left = 0;
  bool relu = false;

  std::size_t out_rows = 1;
  std::size_t out_row_bytes = 0;
  std::size_t out_final_bytes = 0;  // written once, with the last tile
  std::size_t in_row_bytes = 0;     // 0 when the input is not row-sliced
  std::size_t in_fixed_bytes = 0;   // loaded with every tile
  std::size_t weight_bytes = 0;     // weights + biases of the whole layer
  std::size_t weight_row_bytes = 0;  // > 0 when weights slice per output row
  std::size_t scratch_bytes = 0;
  std::size_t macs_per_row = 0;
  bool row_tiled = true;
  bool float_executed = false;

  std::size_t halo_rows() const;
  // Input rows [first, last) needed by output rows [o0, o1), clipped to the map.
  std::pair<std::size_t, std::size_t> InputRows(std::size_t o0, std::size_t o1) const;
  std::size_t InputBytes(std::size_t o0, std::size_t o1) const;
  // Worst case over placements of a tile with `rows` output rows.
  std::size_t MaxInputBytes(std::size_t rows) const;
  std::size_t OutputBytes(std::size_t o0, std::size_t o1) const;
  std::size_t MaxOutputBytes(std::size_t rows) const;
  std::size_t WeightTileBytes(std::size_t rows) const;
  std::size_t OutputTensorBytes() const { return out_rows * out_row_bytes + out_final_bytes; }
  std::size_t Macs(std::size_t o0, std::size_t o1) const { return (o1 - o0) * macs_per_row; }
};

struct LoweredGraph {
  std::vector<LayerDesc> layers;
  std::map<std::string, std::size_t> tensor_bytes;  // every activation, inputs included
  std::size_t model_bytes = 0;                      // all parameters, embedding included
};

// `element_bytes` is 1 for the int8 path and 4 for float32 accounting;
// biases and int32 intermediates are always 4 bytes.
LoweredGraph LowerGraph(const GraphSpec& spec, std::size_t element_bytes = 1);

}  // namespace qvqa

#endif  // QVQA_LOWERING_HPP_
