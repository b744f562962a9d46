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
#include <map>
#include <sstream>
#include <tuple>

#include "qvqa/sim.hpp"

namespace qvqa {
namespace {

using nlohmann::ordered_json;

// Reference deployment figures, echoed for comparison only.
constexpr double kReferenceLatencyMs = 56.0;
constexpr double kReferencePowerW = 0.7;
constexpr double kReferenceEnergyJ = 0.2;

std::uint64_t Cycles(double work, double rate) {
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(work / rate)));
}

// In-order resource: each op starts when both the resource and its inputs are free.
struct Resource {
  std::uint64_t free = 0;
  std::uint64_t busy = 0;
};

class Scheduler {
 public:
  Scheduler(const SimOptions& o) : options_(o) {}

  std::uint64_t Issue(Resource& r, std::uint64_t ready, std::uint64_t duration, EventKind kind,
                      std::size_t layer, std::size_t tile, BufferId buffer) {
    const std::uint64_t start = std::max(r.free, ready);
    const std::uint64_t end = start + duration;
    r.free = end;
    r.busy += duration;
    events.push_back({start, end, kind, layer, tile, buffer});
    return end;
  }

  // Returns the layer's end cycle.
  std::uint64_t Layer(const LayerSchedule& l, std::size_t index, std::uint64_t begin) {
    for (Resource* r : {&load_, &store_, &compute_}) r->free = std::max(r->free, begin);
    Resource& store = options_.separate_store_engine ? store_ : load_;
    const std::size_t n = l.tiles.size();
    std::vector<std::uint64_t> load_end(n), compute_end(n), store_end(n);
    std::uint64_t weights_end = begin;
    if (l.resident_weights > 0) {
      weights_end = Issue(load_, begin, l.resident_weights, EventKind::kDmaLoad, index, 0, BufferId::kW);
    }
    std::uint64_t end = weights_end;
    if (options_.mode == SimMode::kSerial) {
      for (std::size_t t = 0; t < n; ++t) {
        const TileCost& c = l.tiles[t];
        const BufferId buf = t % 2 == 0 ? BufferId::kI : BufferId::kII;
        if (c.weights > 0) end = Issue(load_, end, c.weights, EventKind::kDmaLoad, index, t, BufferId::kW);
        end = Issue(load_, end, c.load, EventKind::kDmaLoad, index, t, buf);
        end = Issue(compute_, end, c.compute, EventKind::kCompute, index, t, buf);
        end = Issue(store, end, c.store, EventKind::kDmaStore, index, t, buf);
      }
      return end;
    }
    auto emit_store = [&](std::size_t t) {
      store_end[t] = Issue(store, compute_end[t], l.tiles[t].store, EventKind::kDmaStore, index, t,
                           t % 2 == 0 ? BufferId::kI : BufferId::kII);
    };
    for (std::size_t t = 0; t < n; ++t) {
      const TileCost& c = l.tiles[t];
      const BufferId buf = t % 2 == 0 ? BufferId::kI : BufferId::kII;
      if (t >= 2) emit_store(t - 2);
      std::uint64_t ready = t >= 2 ? compute_end[t - 2] : weights_end;
      std::uint64_t tile_weights = weights_end;
      if (c.weights > 0) {
        // The single weight buffer is free once the previous tile has computed.
        tile_weights = Issue(load_, t >= 1 ? compute_end[t - 1] : weights_end, c.weights,
                             EventKind::kDmaLoad, index, t, BufferId::kW);
      }
      load_end[t] = Issue(load_, ready, c.load, EventKind::kDmaLoad, index, t, buf);
      ready = std::max({load_end[t], tile_weights, t >= 1 ? compute_end[t - 1] : begin,
                        t >= 2 ? store_end[t - 2] : begin});
      compute_end[t] = Issue(compute_, ready, c.compute, EventKind::kCompute, index, t, buf);
    }
    for (std::size_t t = n >= 2 ? n - 2 : 0; t < n; ++t) emit_store(t);
    for (std::size_t t = 0; t < n; ++t) end = std::max(end, store_end[t]);
    return end;
  }

  std::uint64_t dma_busy() const { return load_.busy + store_.busy; }
  std::uint64_t compute_busy() const { return compute_.busy; }

  std::vector<SimEvent> events;

 private:
  SimOptions options_;
  Resource load_, store_, compute_;
};

std::string_view ModeName(SimMode m) { return m == SimMode::kSerial ? "serial" : "pipelined"; }

}  // namespace

std::string_view EventKindName(EventKind k) {
  switch (k) {
    case EventKind::kDmaLoad: return "dma_load";
    case EventKind::kCompute: return "compute";
    case EventKind::kDmaStore: return "dma_store";
  }
  return "unknown";
}

std::string_view BufferName(BufferId b) {
  switch (b) {
    case BufferId::kI: return "I";
    case BufferId::kII: return "II";
    case BufferId::kW: return "W";
  }
  return "unknown";
}

std::vector<LayerSchedule> BuildSchedule(const TilePlan& plan, const HardwareModel& hw) {
  hw.Validate();
  const LoweredGraph graph = LowerGraph(plan.spec, plan.element_bytes);
  ValidatePlan(plan, graph);
  const double macs_rate = hw.macs_per_cycle * static_cast<double>(hw.cores);
  std::vector<LayerSchedule> out;
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerDesc& d = graph.layers[i];
    const LayerPlan& p = plan.layers[i];
    LayerSchedule l;
    l.name = d.name;
    const bool streamed = p.weights == WeightPlacement::kL2Streamed;
    if (!streamed && d.weight_bytes > 0) {
      l.resident_weights = Cycles(static_cast<double>(d.weight_bytes), hw.dma_bytes_per_cycle);
    }
    for (const auto& [o0, o1] : p.Tiles()) {
      TileCost c;
      c.load = Cycles(static_cast<double>(d.InputBytes(o0, o1)), hw.dma_bytes_per_cycle);
      if (streamed) {
        c.weights = Cycles(static_cast<double>((o1 - o0) * d.weight_row_bytes), hw.dma_bytes_per_cycle);
      }
      c.compute = Cycles(static_cast<double>(d.Macs(o0, o1)), macs_rate);
      c.store = Cycles(static_cast<double>(d.OutputBytes(o0, o1)), hw.dma_bytes_per_cycle);
      l.tiles.push_back(c);
    }
    out.push_back(std::move(l));
  }
  return out;
}

SimReport Simulate(std::span<const LayerSchedule> layers, const HardwareModel& hw,
                   const SimOptions& options) {
  hw.Validate();
  Scheduler sched(options);
  SimReport r;
  r.hw = hw;
  r.options = options;
  std::uint64_t clock = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Require(!layers[i].tiles.empty(), ErrorKind::kPlan, "layer '" + layers[i].name + "' has no tiles");
    const std::uint64_t dma_before = sched.dma_busy(), compute_before = sched.compute_busy();
    const std::uint64_t end = sched.Layer(layers[i], i, clock);
    r.layers.push_back({layers[i].name, clock, end, layers[i].tiles.size(), sched.dma_busy() - dma_before,
                        sched.compute_busy() - compute_before});
    clock = end;
  }
  r.total_cycles = clock;
  r.dma_busy_cycles = sched.dma_busy();
  r.compute_busy_cycles = sched.compute_busy();
  if (clock > 0) {
    r.dma_busy_fraction = static_cast<double>(r.dma_busy_cycles) / static_cast<double>(clock);
    r.compute_busy_fraction = static_cast<double>(r.compute_busy_cycles) / static_cast<double>(clock);
  }
  r.events = std::move(sched.events);
  std::stable_sort(r.events.begin(), r.events.end(),
                   [](const SimEvent& a, const SimEvent& b) { return a.cycle_start < b.cycle_start; });
  const auto le = LatencyEnergy(r, hw);
  r.latency_ms = le.latency_ms;
  r.energy_j = le.energy_j;
  return r;
}

SimReport Simulate(const TilePlan& plan, const HardwareModel& hw, const SimOptions& options) {
  const auto layers = BuildSchedule(plan, hw);
  return Simulate(layers, hw, options);
}

LatencyEnergyResult LatencyEnergy(const SimReport& report, const HardwareModel& hw) {
  LatencyEnergyResult out;
  if (report.total_cycles == 0) return out;
  const double seconds = static_cast<double>(report.total_cycles) / hw.clock_hz;
  const double u = std::clamp(static_cast<double>(report.compute_busy_cycles) /
                                  static_cast<double>(report.total_cycles),
                              0.0, 1.0);
  const double watts = (hw.idle_power_mw + (hw.active_power_mw - hw.idle_power_mw) * u) / 1000.0;
  out.latency_ms = seconds * 1000.0;
  out.energy_j = seconds * watts;
  return out;
}

std::string ValidateTrace(std::span<const SimEvent> events, bool separate_store_engine) {
  // resource 0: load DMA (and stores when shared), 1: store DMA, 2: compute
  auto resource = [&](const SimEvent& e) {
    if (e.kind == EventKind::kCompute) return 2;
    if (e.kind == EventKind::kDmaStore && separate_store_engine) return 1;
    return 0;
  };
  auto describe = [](const SimEvent& e) {
    return std::string(EventKindName(e.kind)) + " of layer " + std::to_string(e.layer) + " tile " +
           std::to_string(e.tile) + " [" + std::to_string(e.cycle_start) + ", " +
           std::to_string(e.cycle_end) + ")";
  };
  std::vector<const SimEvent*> by_resource[3];
  std::map<std::tuple<std::size_t, std::size_t, EventKind>, const SimEvent*> tile_events;
  for (const auto& e : events) {
    if (e.cycle_end <= e.cycle_start) return "empty event: " + describe(e);
    by_resource[resource(e)].push_back(&e);
    if (e.buffer != BufferId::kW) {
      if (!tile_events.emplace(std::make_tuple(e.layer, e.tile, e.kind), &e).second) {
        return "duplicate event: " + describe(e);
      }
    }
  }
  for (auto& list : by_resource) {
    std::sort(list.begin(), list.end(),
              [](const SimEvent* a, const SimEvent* b) { return a->cycle_start < b->cycle_start; });
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i]->cycle_start < list[i - 1]->cycle_end) {
        return "overlap: " + describe(*list[i - 1]) + " and " + describe(*list[i]);
      }
    }
  }
  for (const auto& [key, e] : tile_events) {
    if (e->kind != EventKind::kCompute) continue;
    const auto [layer, tile, kind] = key;
    const auto load = tile_events.find({layer, tile, EventKind::kDmaLoad});
    const auto store = tile_events.find({layer, tile, EventKind::kDmaStore});
    if (load == tile_events.end() || store == tile_events.end()) return "incomplete tile: " + describe(*e);
    if (e->cycle_start < load->second->cycle_end) return "compute before its load: " + describe(*e);
    if (store->second->cycle_start < e->cycle_end) return "store before its compute: " + describe(*store->second);
  }
  return {};
}

ordered_json ReportToJson(const SimReport& r) {
  ordered_json layers = ordered_json::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"layer", l.layer},
                      {"start", l.start},
                      {"end", l.end},
                      {"cycles", l.end - l.start},
                      {"tiles", l.tiles},
                      {"dma_cycles", l.dma_cycles},
                      {"compute_cycles", l.compute_cycles}});
  }
  const double product = kReferenceLatencyMs / 1000.0 * kReferencePowerW;
  return {{"format", "qvqa-sim-report"},
          {"version", 1},
          {"mode", ModeName(r.options.mode)},
          {"separate_store_engine", r.options.separate_store_engine},
          {"hardware", HardwareToJson(r.hw)},
          {"layers", std::move(layers)},
          {"total_cycles", r.total_cycles},
          {"dma_busy_cycles", r.dma_busy_cycles},
          {"compute_busy_cycles", r.compute_busy_cycles},
          {"dma_busy_fraction", r.dma_busy_fraction},
          {"compute_busy_fraction", r.compute_busy_fraction},
          {"latency_ms", r.latency_ms},
          {"energy_j", r.energy_j},
          {"reference",
           {{"latency_ms", kReferenceLatencyMs},
            {"power_w", kReferencePowerW},
            {"energy_j", kReferenceEnergyJ},
            {"latency_times_power_j", product},
            {"energy_consistent", std::abs(product - kReferenceEnergyJ) <= 1e-9}}}};
}

SimReport ReportFromJson(const ordered_json& j) {
  SimReport r;
  try {
    Require(j.at("format").get<std::string>() == "qvqa-sim-report", ErrorKind::kFormat,
            "not a simulation report");
    Require(j.at("version").get<int>() == 1, ErrorKind::kUnsupportedVersion,
            "unsupported report version " + j.at("version").dump());
    const auto mode = j.at("mode").get<std::string>();
    Require(mode == "pipelined" || mode == "serial", ErrorKind::kFormat, "unknown mode '" + mode + "'");
    r.options.mode = mode == "serial" ? SimMode::kSerial : SimMode::kPipelined;
    r.options.separate_store_engine = j.at("separate_store_engine").get<bool>();
    r.hw = HardwareFromJson(j.at("hardware"));
    for (const auto& l : j.at("layers")) {
      LayerCycles c{l.at("layer").get<std::string>(), l.at("start").get<std::uint64_t>(),
                    l.at("end").get<std::uint64_t>(), l.at("tiles").get<std::size_t>(),
                    l.at("dma_cycles").get<std::uint64_t>(), l.at("compute_cycles").get<std::uint64_t>()};
      Require(c.end >= c.start && l.at("cycles").get<std::uint64_t>() == c.end - c.start,
              ErrorKind::kFormat, "layer '" + c.layer + "' cycle fields disagree");
      r.layers.push_back(std::move(c));
    }
    r.total_cycles = j.at("total_cycles").get<std::uint64_t>();
    r.dma_busy_cycles = j.at("dma_busy_cycles").get<std::uint64_t>();
    r.compute_busy_cycles = j.at("compute_busy_cycles").get<std::uint64_t>();
    r.dma_busy_fraction = j.at("dma_busy_fraction").get<double>();
    r.compute_busy_fraction = j.at("compute_busy_fraction").get<double>();
    r.latency_ms = j.at("latency_ms").get<double>();
    r.energy_j = j.at("energy_j").get<double>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kFormat, std::string("simulation report: ") + e.what());
  }
  Require(r.latency_ms >= 0.0 && r.energy_j >= 0.0, ErrorKind::kFormat,
          "simulation report has negative latency or energy");
  return r;
}

std::string TraceToCsv(std::span<const SimEvent> events, std::span<const LayerSchedule> layers) {
  std::ostringstream os;
  os << "cycle_start,cycle_end,kind,layer,tile,buffer\n";
  for (const auto& e : events) {
    os << e.cycle_start << ',' << e.cycle_end << ',' << EventKindName(e.kind) << ','
       << (e.layer < layers.size() ? layers[e.layer].name : std::to_string(e.layer)) << ',' << e.tile
       << ',' << BufferName(e.buffer) << '\n';
  }
  return os.str();
}

}  // namespace qvqa
