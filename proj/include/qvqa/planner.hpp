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

#ifndef QVQA_PLANNER_HPP_
#define QVQA_PLANNER_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "qvqa/graph.hpp"
#include "qvqa/lowering.hpp"

namespace qvqa {

struct HardwareModel {
  std::size_t l1_bytes = 53'964;      // 52.7 KB usable cluster L1
  std::size_t l2_bytes = 409'600;     // 400 KB
  std::size_t dram_bytes = 8'192'000;  // 8000 KB
  double dma_bytes_per_cycle = 8.0;
  double macs_per_cycle = 2.0;  // per core
  std::size_t cores = 8;
  double clock_hz = 175e6;
  double active_power_mw = 693.0;
  double idle_power_mw = 693.0;

  void Validate() const;
  bool operator==(const HardwareModel&) const = default;
};

nlohmann::ordered_json HardwareToJson(const HardwareModel& hw);
// Missing keys keep their defaults; unknown keys are rejected.
HardwareModel HardwareFromJson(const nlohmann::ordered_json& j);

struct LayerWorkingSet {
  std::string layer;
  LayerKind kind = LayerKind::kConv;
  std::size_t input_bytes = 0;
  std::size_t weight_bytes = 0;
  std::size_t output_bytes = 0;
  std::size_t scratch_bytes = 0;
  std::size_t min_tile_input_bytes = 0;  // one output row, halo included
  std::size_t min_tile_output_bytes = 0;
  std::size_t halo_rows = 0;
};

// int8 accounting when `quantized`, float32 otherwise. Biases, int32
// intermediates and scratch are 4 bytes either way.
std::vector<LayerWorkingSet> WorkingSet(const GraphSpec& spec, bool quantized = true);

enum class WeightPlacement { kL1Resident, kL2Streamed };

std::string_view PlacementName(WeightPlacement p);

struct LayerPlan {
  std::string layer;
  std::size_t out_rows = 1;
  std::size_t tile_rows = 1;
  std::size_t tiles_total = 1;
  std::size_t halo_rows = 0;
  WeightPlacement weights = WeightPlacement::kL1Resident;
  // L1 allocation: two input and two output buffers plus one weight buffer.
  std::size_t in_buf = 0;
  std::size_t out_buf = 0;
  std::size_t weight_buf = 0;

  std::size_t l1_bytes() const { return 2 * (in_buf + out_buf) + weight_buf; }
  // Output row ranges [begin, end) in execution order.
  std::vector<std::pair<std::size_t, std::size_t>> Tiles() const;
  bool operator==(const LayerPlan&) const = default;
};

struct TilePlan {
  GraphSpec spec;
  HardwareModel hw;
  std::size_t element_bytes = 1;
  std::vector<LayerPlan> layers;
  std::size_t model_bytes = 0;
  std::size_t peak_activation_bytes = 0;
  std::size_t peak_l1_bytes = 0;
  std::size_t peak_l2_bytes = 0;  // model + peak live activations
  std::size_t dram_bytes = 0;

  bool operator==(const TilePlan&) const = default;
};

// Greedy per layer: the largest tile row count whose double-buffered working
// set fits L1, with weights resident when they fit beside those buffers and
// streamed per tile otherwise. Throws kInfeasibleLayer (naming the layer)
// when even one row does not fit, kInfeasibleModel when L2 overflows.
TilePlan PlanTiling(const GraphSpec& spec, const HardwareModel& hw, bool quantized = true);
TilePlan PlanTiling(const LoweredGraph& graph, const GraphSpec& spec, const HardwareModel& hw,
                    std::size_t element_bytes);

// One layer at a fixed tile row count. Throws kInfeasibleLayer when that
// count does not fit `l1_bytes`.
LayerPlan PlanLayerRows(const LayerDesc& d, std::size_t tile_rows, std::size_t l1_bytes);

// `plan` with layer `layer` re-tiled at `tile_rows`, against plan.hw.
TilePlan WithTileRows(TilePlan plan, std::size_t layer, std::size_t tile_rows);

// Peak bytes of simultaneously live activations under in-order execution.
std::size_t PeakActivationBytes(const LoweredGraph& graph);

// Throws kPlan unless `plan` matches `graph` layer for layer and every
// allocation covers the worst tile and fits L1.
void ValidatePlan(const TilePlan& plan, const LoweredGraph& graph);

struct MemoryRow {
  std::string level;
  std::size_t available = 0;
  std::size_t used = 0;
  double percent = 0.0;
};

// L1, L2 and DRAM rows.
std::vector<MemoryRow> MemoryReport(const TilePlan& plan, const HardwareModel& hw);
std::string FormatMemoryTable(const std::vector<MemoryRow>& rows);

nlohmann::ordered_json PlanToJson(const TilePlan& plan);
TilePlan PlanFromJson(const nlohmann::ordered_json& j);

}  // namespace qvqa

#endif  // QVQA_PLANNER_HPP_
