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

#ifndef QVQA_SIM_HPP_
#define QVQA_SIM_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qvqa/model.hpp"
#include "qvqa/planner.hpp"

namespace qvqa {

// ---- functional execution ----

// Runs the integer path layer by layer over the plan's row tiles. Every
// tile reads only its own input rows (halo included) and writes a disjoint
// slice of the layer output. Throws kPlan when the plan does not belong to
// the model's graph.
VqaOutput TiledExecute(const QuantModel& model, const TilePlan& plan, const QuantTensor& image,
                       std::span<const std::int32_t> token_ids, QuantTrace* trace = nullptr);
VqaOutput TiledExecute(const QuantModel& model, const TilePlan& plan, const RealTensor& image,
                       std::span<const std::int32_t> token_ids, QuantTrace* trace = nullptr);

// ---- temporal simulation ----

enum class EventKind { kDmaLoad, kCompute, kDmaStore };
// I and II are the two halves of the double buffer; W is the weight buffer.
enum class BufferId { kI, kII, kW };

std::string_view EventKindName(EventKind k);
std::string_view BufferName(BufferId b);

struct SimEvent {
  std::uint64_t cycle_start = 0;
  std::uint64_t cycle_end = 0;
  EventKind kind = EventKind::kCompute;
  std::size_t layer = 0;
  std::size_t tile = 0;
  BufferId buffer = BufferId::kI;

  bool operator==(const SimEvent&) const = default;
};

// Cycle costs of one tile. `weights` is the per-tile weight fetch of a
// streamed layer and 0 otherwise.
struct TileCost {
  std::uint64_t load = 1;
  std::uint64_t weights = 0;
  std::uint64_t compute = 1;
  std::uint64_t store = 1;
};

struct LayerSchedule {
  std::string name;
  std::uint64_t resident_weights = 0;  // one-off fetch before the first tile
  std::vector<TileCost> tiles;
};

// Costs from a plan: ceil(bytes / dma_bytes_per_cycle) for transfers,
// ceil(MACs / (macs_per_cycle * cores)) for compute, each at least 1 cycle.
std::vector<LayerSchedule> BuildSchedule(const TilePlan& plan, const HardwareModel& hw);

enum class SimMode { kPipelined, kSerial };

struct SimOptions {
  SimMode mode = SimMode::kPipelined;
  bool separate_store_engine = false;  // default: one DMA engine for loads and stores
};

struct LayerCycles {
  std::string layer;
  std::uint64_t start = 0;
  std::uint64_t end = 0;
  std::size_t tiles = 0;
  std::uint64_t dma_cycles = 0;
  std::uint64_t compute_cycles = 0;

  bool operator==(const LayerCycles&) const = default;
};

struct SimReport {
  HardwareModel hw;
  SimOptions options;
  std::vector<LayerCycles> layers;
  std::uint64_t total_cycles = 0;
  std::uint64_t dma_busy_cycles = 0;
  std::uint64_t compute_busy_cycles = 0;
  double dma_busy_fraction = 0.0;  // of total_cycles, summed over engines
  double compute_busy_fraction = 0.0;
  double latency_ms = 0.0;
  double energy_j = 0.0;
  std::vector<SimEvent> events;
};

// Double-buffered schedule: the DMA queue issues [W], L0, L1, then S(t-2)
// and L(t) for each later tile, then the remaining stores. L(t) waits for
// C(t-2) to free its input half, C(t) for L(t), C(t-1) and S(t-2), S(t) for
// C(t). Serial mode runs [W] L C S tile after tile. Layers do not overlap.
SimReport Simulate(std::span<const LayerSchedule> layers, const HardwareModel& hw,
                   const SimOptions& options = {});
SimReport Simulate(const TilePlan& plan, const HardwareModel& hw, const SimOptions& options = {});

struct LatencyEnergyResult {
  double latency_ms = 0.0;
  double energy_j = 0.0;
};

// latency = cycles / clock; energy = latency * (idle + (active - idle) * u),
// u the compute busy fraction.
LatencyEnergyResult LatencyEnergy(const SimReport& report, const HardwareModel& hw);

// Returns an empty string for a valid trace, otherwise the first violation:
// overlapping events on one resource, empty events, or a tile whose
// compute starts before its load ends or whose store starts before its
// compute ends.
std::string ValidateTrace(std::span<const SimEvent> events, bool separate_store_engine);

// Events are not part of the report document; see TraceToCsv.
// The reference deployment figures are echoed with their latency x power
// product; they are context and never checked against the simulation.
nlohmann::ordered_json ReportToJson(const SimReport& report);
SimReport ReportFromJson(const nlohmann::ordered_json& j);

// Header `cycle_start,cycle_end,kind,layer,tile,buffer`, one event per line.
std::string TraceToCsv(std::span<const SimEvent> events, std::span<const LayerSchedule> layers);

}  // namespace qvqa

#endif  // QVQA_SIM_HPP_
