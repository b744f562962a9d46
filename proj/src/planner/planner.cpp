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

#include "qvqa/planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace qvqa {
namespace {

using nlohmann::ordered_json;

std::size_t Need(const LayerDesc& d, std::size_t rows, bool streamed) {
  const std::size_t weights = streamed ? d.WeightTileBytes(rows) : d.weight_bytes + d.scratch_bytes;
  return 2 * (d.MaxInputBytes(rows) + d.MaxOutputBytes(rows)) + weights;
}

}  // namespace

LayerPlan PlanLayerRows(const LayerDesc& d, std::size_t rows, std::size_t l1_bytes) {
  Require(rows >= 1 && rows <= d.out_rows && (d.row_tiled || rows == d.out_rows), ErrorKind::kPlan,
          "layer '" + d.name + "' cannot use " + std::to_string(rows) + "-row tiles");
  const bool resident = Need(d, rows, false) <= l1_bytes;
  if (!resident && !(d.weight_row_bytes > 0 && Need(d, rows, true) <= l1_bytes)) {
    Fail(ErrorKind::kInfeasibleLayer, "layer '" + d.name + "' with " + std::to_string(rows) +
                                          "-row tiles does not fit L1");
  }
  LayerPlan p;
  p.layer = d.name;
  p.out_rows = d.out_rows;
  p.tile_rows = rows;
  p.tiles_total = (d.out_rows + rows - 1) / rows;
  p.halo_rows = d.halo_rows();
  p.in_buf = d.MaxInputBytes(rows);
  p.out_buf = d.MaxOutputBytes(rows);
  p.weights = resident ? WeightPlacement::kL1Resident : WeightPlacement::kL2Streamed;
  p.weight_buf = resident ? d.weight_bytes + d.scratch_bytes : d.WeightTileBytes(rows);
  return p;
}

namespace {

LayerPlan PlanLayer(const LayerDesc& d, std::size_t l1_bytes) {
  const bool can_stream = d.weight_row_bytes > 0;
  auto fits = [&](std::size_t rows) {
    return Need(d, rows, false) <= l1_bytes || (can_stream && Need(d, rows, true) <= l1_bytes);
  };
  std::size_t rows = 0;
  if (!d.row_tiled) {
    if (fits(d.out_rows)) rows = d.out_rows;
  } else {
    // Feasibility is monotone in the row count, so search downward.
    for (std::size_t r = d.out_rows; r >= 1 && rows == 0; --r) {
      if (fits(r)) rows = r;
    }
  }
  if (rows == 0) {
    const std::size_t min_rows = d.row_tiled ? 1 : d.out_rows;
    Fail(ErrorKind::kInfeasibleLayer,
         "layer '" + d.name + "' needs " + std::to_string(Need(d, min_rows, can_stream)) +
             " bytes of L1 for its smallest tile, budget is " + std::to_string(l1_bytes));
  }
  return PlanLayerRows(d, rows, l1_bytes);
}

ordered_json LayerPlanToJson(const LayerPlan& p) {
  return {{"layer", p.layer},
          {"out_rows", p.out_rows},
          {"tile_rows", p.tile_rows},
          {"tiles_total", p.tiles_total},
          {"halo_rows", p.halo_rows},
          {"weights", PlacementName(p.weights)},
          {"l1_allocation",
           {{"in_buf", p.in_buf}, {"in_buf_count", 2}, {"out_buf", p.out_buf},
            {"out_buf_count", 2}, {"weight_buf", p.weight_buf}}},
          {"l1_bytes", p.l1_bytes()}};
}

LayerPlan LayerPlanFromJson(const ordered_json& j) {
  LayerPlan p;
  p.layer = j.at("layer").get<std::string>();
  p.out_rows = j.at("out_rows").get<std::size_t>();
  p.tile_rows = j.at("tile_rows").get<std::size_t>();
  p.tiles_total = j.at("tiles_total").get<std::size_t>();
  p.halo_rows = j.at("halo_rows").get<std::size_t>();
  const auto placement = j.at("weights").get<std::string>();
  if (placement == "l1_resident") {
    p.weights = WeightPlacement::kL1Resident;
  } else if (placement == "l2_streamed") {
    p.weights = WeightPlacement::kL2Streamed;
  } else {
    Fail(ErrorKind::kPlan, "unknown weight placement '" + placement + "'");
  }
  const auto& a = j.at("l1_allocation");
  Require(a.at("in_buf_count").get<int>() == 2 && a.at("out_buf_count").get<int>() == 2,
          ErrorKind::kPlan, "plans must double-buffer inputs and outputs");
  p.in_buf = a.at("in_buf").get<std::size_t>();
  p.out_buf = a.at("out_buf").get<std::size_t>();
  p.weight_buf = a.at("weight_buf").get<std::size_t>();
  Require(j.at("l1_bytes").get<std::size_t>() == p.l1_bytes(), ErrorKind::kPlan,
          "layer '" + p.layer + "' l1_bytes disagrees with its allocation table");
  return p;
}

}  // namespace

void HardwareModel::Validate() const {
  Require(l1_bytes > 0 && l1_bytes < l2_bytes && l2_bytes < dram_bytes, ErrorKind::kConfig,
          "hardware model needs 0 < l1 < l2 < dram");
  Require(dma_bytes_per_cycle > 0.0 && macs_per_cycle > 0.0 && cores >= 1 && clock_hz > 0.0,
          ErrorKind::kConfig, "hardware rates must be positive");
  Require(active_power_mw >= 0.0 && idle_power_mw >= 0.0, ErrorKind::kConfig,
          "power figures must be non-negative");
}

ordered_json HardwareToJson(const HardwareModel& hw) {
  return {{"l1_bytes", hw.l1_bytes},
          {"l2_bytes", hw.l2_bytes},
          {"dram_bytes", hw.dram_bytes},
          {"dma_bytes_per_cycle", hw.dma_bytes_per_cycle},
          {"macs_per_cycle", hw.macs_per_cycle},
          {"cores", hw.cores},
          {"clock_hz", hw.clock_hz},
          {"active_power_mw", hw.active_power_mw},
          {"idle_power_mw", hw.idle_power_mw}};
}

HardwareModel HardwareFromJson(const ordered_json& j) {
  Require(j.is_object(), ErrorKind::kConfig, "hardware model must be a JSON object");
  HardwareModel hw;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "l1_bytes") hw.l1_bytes = v.get<std::size_t>();
      else if (key == "l2_bytes") hw.l2_bytes = v.get<std::size_t>();
      else if (key == "dram_bytes") hw.dram_bytes = v.get<std::size_t>();
      else if (key == "dma_bytes_per_cycle") hw.dma_bytes_per_cycle = v.get<double>();
      else if (key == "macs_per_cycle") hw.macs_per_cycle = v.get<double>();
      else if (key == "cores") hw.cores = v.get<std::size_t>();
      else if (key == "clock_hz") hw.clock_hz = v.get<double>();
      else if (key == "active_power_mw") hw.active_power_mw = v.get<double>();
      else if (key == "idle_power_mw") hw.idle_power_mw = v.get<double>();
      else Fail(ErrorKind::kConfig, "unknown hardware key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kConfig, std::string("hardware model: ") + e.what());
  }
  hw.Validate();
  return hw;
}

std::vector<LayerWorkingSet> WorkingSet(const GraphSpec& spec, bool quantized) {
  const LoweredGraph g = LowerGraph(spec, quantized ? 1 : 4);
  std::vector<LayerWorkingSet> out;
  for (const auto& d : g.layers) {
    LayerWorkingSet w;
    w.layer = d.name;
    w.kind = d.kind;
    w.input_bytes = d.InputBytes(0, d.out_rows);
    w.weight_bytes = d.weight_bytes;
    w.output_bytes = d.OutputTensorBytes();
    w.scratch_bytes = d.scratch_bytes;
    const std::size_t min_rows = d.row_tiled ? 1 : d.out_rows;
    w.min_tile_input_bytes = d.MaxInputBytes(min_rows);
    w.min_tile_output_bytes = d.MaxOutputBytes(min_rows);
    w.halo_rows = d.halo_rows();
    out.push_back(std::move(w));
  }
  return out;
}

std::string_view PlacementName(WeightPlacement p) {
  return p == WeightPlacement::kL1Resident ? "l1_resident" : "l2_streamed";
}

std::vector<std::pair<std::size_t, std::size_t>> LayerPlan::Tiles() const {
  std::vector<std::pair<std::size_t, std::size_t>> tiles;
  for (std::size_t r = 0; r < out_rows; r += tile_rows) {
    tiles.emplace_back(r, std::min(out_rows, r + tile_rows));
  }
  return tiles;
}

TilePlan WithTileRows(TilePlan plan, std::size_t layer, std::size_t tile_rows) {
  const LoweredGraph graph = LowerGraph(plan.spec, plan.element_bytes);
  Require(layer < graph.layers.size() && layer < plan.layers.size(), ErrorKind::kPlan,
          "layer index " + std::to_string(layer) + " out of range");
  plan.layers[layer] = PlanLayerRows(graph.layers[layer], tile_rows, plan.hw.l1_bytes);
  plan.peak_l1_bytes = 0;
  for (const auto& p : plan.layers) plan.peak_l1_bytes = std::max(plan.peak_l1_bytes, p.l1_bytes());
  return plan;
}

std::size_t PeakActivationBytes(const LoweredGraph& graph) {
  // Step at which each tensor is last read; graph inputs are live from the start.
  std::map<std::string, std::size_t> last_use, produced;
  produced["input"] = produced["tokens"] = 0;
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    produced[graph.layers[i].name] = i;
    for (const auto& in : graph.layers[i].inputs) last_use[in] = i;
  }
  if (!graph.layers.empty()) last_use[graph.layers.back().name] = graph.layers.size() - 1;
  std::size_t peak = 0;
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    std::size_t live = 0;
    for (const auto& [name, first] : produced) {
      const auto it = last_use.find(name);
      const std::size_t last = it == last_use.end() ? first : it->second;
      if (first <= i && i <= last) live += graph.tensor_bytes.at(name);
    }
    peak = std::max(peak, live);
  }
  return peak;
}

TilePlan PlanTiling(const LoweredGraph& graph, const GraphSpec& spec, const HardwareModel& hw,
                    std::size_t element_bytes) {
  hw.Validate();
  TilePlan plan;
  plan.spec = spec;
  plan.hw = hw;
  plan.element_bytes = element_bytes;
  for (const auto& d : graph.layers) {
    plan.layers.push_back(PlanLayer(d, hw.l1_bytes));
    plan.peak_l1_bytes = std::max(plan.peak_l1_bytes, plan.layers.back().l1_bytes());
  }
  plan.model_bytes = graph.model_bytes;
  plan.peak_activation_bytes = PeakActivationBytes(graph);
  plan.peak_l2_bytes = plan.model_bytes + plan.peak_activation_bytes;
  Require(plan.peak_l2_bytes <= hw.l2_bytes, ErrorKind::kInfeasibleModel,
          "model needs " + std::to_string(plan.peak_l2_bytes) + " bytes of L2 (" +
              std::to_string(plan.model_bytes) + " parameters + " +
              std::to_string(plan.peak_activation_bytes) + " activations), budget is " +
              std::to_string(hw.l2_bytes));
  plan.dram_bytes = 0;
  return plan;
}

TilePlan PlanTiling(const GraphSpec& spec, const HardwareModel& hw, bool quantized) {
  const std::size_t eb = quantized ? 1 : 4;
  return PlanTiling(LowerGraph(spec, eb), spec, hw, eb);
}

void ValidatePlan(const TilePlan& plan, const LoweredGraph& graph) {
  Require(plan.layers.size() == graph.layers.size(), ErrorKind::kPlan,
          "plan has " + std::to_string(plan.layers.size()) + " layers, graph has " +
              std::to_string(graph.layers.size()));
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerDesc& d = graph.layers[i];
    const LayerPlan& p = plan.layers[i];
    Require(p.layer == d.name, ErrorKind::kPlan,
            "plan layer " + std::to_string(i) + " is '" + p.layer + "', graph has '" + d.name + "'");
    Require(p.out_rows == d.out_rows && p.tile_rows >= 1 && p.tile_rows <= d.out_rows &&
                p.tiles_total == (d.out_rows + p.tile_rows - 1) / p.tile_rows,
            ErrorKind::kPlan, "layer '" + d.name + "' has inconsistent tile geometry");
    Require(d.row_tiled || p.tile_rows == d.out_rows, ErrorKind::kPlan,
            "layer '" + d.name + "' cannot be split into row tiles");
    const std::size_t weights = p.weights == WeightPlacement::kL1Resident
                                    ? d.weight_bytes + d.scratch_bytes
                                    : d.WeightTileBytes(p.tile_rows);
    Require(p.weights == WeightPlacement::kL1Resident || d.weight_row_bytes > 0, ErrorKind::kPlan,
            "layer '" + d.name + "' weights cannot be streamed");
    Require(p.in_buf >= d.MaxInputBytes(p.tile_rows) && p.out_buf >= d.MaxOutputBytes(p.tile_rows) &&
                p.weight_buf >= weights,
            ErrorKind::kPlan, "layer '" + d.name + "' buffers do not cover its largest tile");
    Require(p.l1_bytes() <= plan.hw.l1_bytes, ErrorKind::kPlan,
            "layer '" + d.name + "' allocation exceeds L1");
  }
}

std::vector<MemoryRow> MemoryReport(const TilePlan& plan, const HardwareModel& hw) {
  auto row = [](std::string level, std::size_t available, std::size_t used) {
    const double pct = available > 0 ? 100.0 * static_cast<double>(used) / static_cast<double>(available) : 0.0;
    return MemoryRow{std::move(level), available, used, pct};
  };
  return {row("L1", hw.l1_bytes, plan.peak_l1_bytes), row("L2", hw.l2_bytes, plan.peak_l2_bytes),
          row("DRAM", hw.dram_bytes, plan.dram_bytes)};
}

std::string FormatMemoryTable(const std::vector<MemoryRow>& rows) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%-6s %16s %16s %9s\n", "Level", "Available (KB)",
                "Used (KB)", "Used (%)");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-6s %16.1f %16.1f %8.1f%%\n", r.level.c_str(),
                  static_cast<double>(r.available) / 1024.0, static_cast<double>(r.used) / 1024.0,
                  r.percent);
    os << line;
  }
  return os.str();
}

ordered_json PlanToJson(const TilePlan& plan) {
  ordered_json layers = ordered_json::array();
  for (const auto& p : plan.layers) layers.push_back(LayerPlanToJson(p));
  return {{"format", "qvqa-plan"},
          {"version", 1},
          {"hardware", HardwareToJson(plan.hw)},
          {"graph", GraphSpecToJson(plan.spec)},
          {"element_bytes", plan.element_bytes},
          {"layers", std::move(layers)},
          {"model_bytes", plan.model_bytes},
          {"peak_activation_bytes", plan.peak_activation_bytes},
          {"peak_l1_bytes", plan.peak_l1_bytes},
          {"peak_l2_bytes", plan.peak_l2_bytes},
          {"dram_bytes", plan.dram_bytes}};
}

TilePlan PlanFromJson(const ordered_json& j) {
  TilePlan plan;
  try {
    Require(j.at("format").get<std::string>() == "qvqa-plan", ErrorKind::kFormat,
            "not a tile plan");
    Require(j.at("version").get<int>() == 1, ErrorKind::kUnsupportedVersion,
            "unsupported plan version " + j.at("version").dump());
    plan.hw = HardwareFromJson(j.at("hardware"));
    plan.spec = GraphSpecFromJson(j.at("graph"));
    plan.element_bytes = j.at("element_bytes").get<std::size_t>();
    for (const auto& l : j.at("layers")) plan.layers.push_back(LayerPlanFromJson(l));
    plan.model_bytes = j.at("model_bytes").get<std::size_t>();
    plan.peak_activation_bytes = j.at("peak_activation_bytes").get<std::size_t>();
    plan.peak_l1_bytes = j.at("peak_l1_bytes").get<std::size_t>();
    plan.peak_l2_bytes = j.at("peak_l2_bytes").get<std::size_t>();
    plan.dram_bytes = j.at("dram_bytes").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kFormat, std::string("tile plan: ") + e.what());
  }
  ValidatePlan(plan, LowerGraph(plan.spec, plan.element_bytes));
  return plan;
}

}  // namespace qvqa
