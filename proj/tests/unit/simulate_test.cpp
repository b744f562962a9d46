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

#include <map>
#include <random>
#include <sstream>
#include <tuple>

#include "qvqa/sim.hpp"
#include "generators.hpp"
#include "testing.hpp"

using namespace qvqa;
using namespace qvqa::testing;
using namespace qvqa::oracle;

namespace {

// Each tile of each layer: one load, one compute and one store, the data
// halves alternating I/II by tile parity.
void CheckStructure(const SimReport& r, std::span<const LayerSchedule> layers) {
  std::map<std::tuple<std::size_t, std::size_t, EventKind>, int> seen;
  for (const auto& e : r.events) {
    REQUIRE(e.cycle_end > e.cycle_start);
    if (e.buffer == BufferId::kW) continue;
    REQUIRE(e.buffer == (e.tile % 2 ? BufferId::kII : BufferId::kI));
    ++seen[{e.layer, e.tile, e.kind}];
  }
  std::size_t expected = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (std::size_t t = 0; t < layers[l].tiles.size(); ++t) {
      for (auto k : {EventKind::kDmaLoad, EventKind::kCompute, EventKind::kDmaStore}) {
        REQUIRE(seen[{l, t, k}] == 1);
        ++expected;
      }
    }
  }
  REQUIRE(seen.size() == expected);
}

}  // namespace

TEST_CASE("pipelined never loses to serial on random schedules") {
  std::mt19937_64 rng(601);
  const HardwareModel hw;
  for (int n = 0; n < 300; ++n) {
    const auto layers = RandomSchedule(rng, 12);
    for (bool two : {false, true}) {
      const auto p = Simulate(layers, hw, {SimMode::kPipelined, two});
      const auto s = Simulate(layers, hw, {SimMode::kSerial, two});
      REQUIRE(p.total_cycles <= s.total_cycles);
      REQUIRE(ValidateTrace(p.events, two) == "");
      REQUIRE(ValidateTrace(s.events, two) == "");
      CheckStructure(p, layers);
      CheckStructure(s, layers);
    }
  }
}

TEST_CASE("pipelined never loses to serial on random plans") {
  std::mt19937_64 rng(602);
  int plans = 0;
  while (plans < 100) {
    HardwareModel hw;
    hw.l1_bytes = Pick(rng, 8'000, 80'000);
    hw.l2_bytes = 1 << 22;
    hw.dram_bytes = 1 << 24;
    hw.dma_bytes_per_cycle = 0.5 * static_cast<double>(Pick(rng, 1, 32));
    hw.macs_per_cycle = 0.5 * static_cast<double>(Pick(rng, 1, 16));
    hw.cores = Pick(rng, 1, 8);
    TilePlan plan;
    try {
      plan = PlanTiling(RandomStudent(rng), hw);
    } catch (const Error& e) {
      REQUIRE(e.kind() == ErrorKind::kInfeasibleLayer);
      continue;
    }
    ++plans;
    const auto layers = BuildSchedule(plan, hw);
    const auto p = Simulate(plan, hw);
    const auto s = Simulate(plan, hw, {SimMode::kSerial, false});
    REQUIRE(p.total_cycles <= s.total_cycles);
    REQUIRE(ValidateTrace(p.events, false) == "");
    REQUIRE(ValidateTrace(s.events, false) == "");
    CheckStructure(p, layers);
  }
}

TEST_CASE("single tile layers make both modes equal") {
  std::mt19937_64 rng(603);
  for (int n = 0; n < 100; ++n) {
    const auto layers = RandomSchedule(rng, 1);
    CHECK(Simulate(layers, HardwareModel{}).total_cycles ==
          Simulate(layers, HardwareModel{}, {SimMode::kSerial, false}).total_cycles);
  }
}

TEST_CASE("uniform compute bound layers follow the closed form") {
  std::mt19937_64 rng(604);
  for (int n = 0; n < 500; ++n) {
    const bool two = n % 2;
    const std::uint64_t l = Pick(rng, 1, 40), s = Pick(rng, 1, 40);
    const std::uint64_t floor_c = two ? std::max(l, s) : l + s;
    const std::uint64_t c = floor_c + Pick(rng, 0, 50);
    const std::uint64_t tiles = Pick(rng, 1, 30);
    const std::vector<LayerSchedule> layer{{"u", 0, std::vector<TileCost>(tiles, TileCost{l, 0, c, s})}};
    const auto r = Simulate(layer, HardwareModel{}, {SimMode::kPipelined, two});
    REQUIRE(r.total_cycles == l + tiles * c + s);
    REQUIRE(r.compute_busy_cycles == tiles * c);
  }
}

TEST_CASE("serial mode is the sum of its parts") {
  std::mt19937_64 rng(605);
  for (int n = 0; n < 100; ++n) {
    const auto layers = RandomSchedule(rng, 6);
    std::uint64_t sum = 0;
    for (const auto& l : layers) {
      sum += l.resident_weights;
      for (const auto& t : l.tiles) sum += t.load + t.weights + t.compute + t.store;
    }
    CHECK(Simulate(layers, HardwareModel{}, {SimMode::kSerial, false}).total_cycles == sum);
  }
}

TEST_CASE("simulation is deterministic") {
  const TilePlan plan = PlanTiling(GraphSpec::DefaultStudent(), HardwareModel{});
  const auto a = Simulate(plan, HardwareModel{}), b = Simulate(plan, HardwareModel{});
  CHECK(a.events == b.events);
  CHECK(a.total_cycles == b.total_cycles);
  CHECK(ReportToJson(a).dump() == ReportToJson(b).dump());
}

TEST_CASE("schedule costs follow the plan") {
  HardwareModel hw;
  hw.dma_bytes_per_cycle = 3.0;
  hw.macs_per_cycle = 1.5;
  hw.cores = 4;
  const TilePlan plan = PlanTiling(GraphSpec::DefaultStudent(), hw);
  const auto graph = LowerGraph(plan.spec);
  const auto layers = BuildSchedule(plan, hw);
  const auto ceil_div = [](std::size_t a, double r) {
    return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(static_cast<double>(a) / r)));
  };
  REQUIRE(layers.size() == graph.layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto tiles = plan.layers[i].Tiles();
    REQUIRE(layers[i].tiles.size() == tiles.size());
    for (std::size_t t = 0; t < tiles.size(); ++t) {
      const auto [o0, o1] = tiles[t];
      const auto& c = layers[i].tiles[t];
      CHECK(c.load == ceil_div(graph.layers[i].InputBytes(o0, o1), 3.0));
      CHECK(c.compute == ceil_div(graph.layers[i].Macs(o0, o1), 6.0));
      CHECK(c.store == ceil_div(graph.layers[i].OutputBytes(o0, o1), 3.0));
    }
  }
}

TEST_CASE("trace validation catches violations") {
  const std::vector<SimEvent> ok{{0, 5, EventKind::kDmaLoad, 0, 0, BufferId::kI},
                                 {5, 9, EventKind::kCompute, 0, 0, BufferId::kI},
                                 {5, 8, EventKind::kDmaLoad, 0, 1, BufferId::kII},
                                 {9, 12, EventKind::kDmaStore, 0, 0, BufferId::kI}};
  CHECK(ValidateTrace(ok, false) == "");
  auto overlap = ok;
  overlap[2].cycle_start = 4;  // load 1 overlaps load 0 on the one engine
  CHECK(ValidateTrace(overlap, false) != "");
  auto early = ok;
  early[1].cycle_start = 4;  // compute before its load finished
  CHECK(ValidateTrace(early, false) != "");
  auto store = ok;
  store[3].cycle_start = 8;
  CHECK(ValidateTrace(store, false) != "");
  auto shared = ok;
  shared[3] = {7, 8, EventKind::kDmaStore, 0, 0, BufferId::kI};
  shared[1] = {5, 7, EventKind::kCompute, 0, 0, BufferId::kI};
  CHECK(ValidateTrace(shared, false) != "");  // store and load 1 share the engine
  CHECK(ValidateTrace(shared, true) == "");
  std::vector<SimEvent> empty{{3, 3, EventKind::kCompute, 0, 0, BufferId::kI}};
  CHECK(ValidateTrace(empty, false) != "");
}

TEST_CASE("latency and energy") {
  HardwareModel hw;
  hw.clock_hz = 100e6;
  hw.active_power_mw = 700;
  hw.idle_power_mw = 100;
  SimReport r;
  r.total_cycles = 50'000'000;  // 0.5 s
  r.compute_busy_cycles = 25'000'000;
  const auto le = LatencyEnergy(r, hw);
  CHECK(le.latency_ms == doctest::Approx(500.0));
  CHECK(le.energy_j == doctest::Approx(0.5 * (0.1 + 0.6 * 0.5)));
  r.compute_busy_cycles = 0;
  CHECK(LatencyEnergy(r, hw).energy_j == doctest::Approx(0.05));

  // Defaults: one active power level, so energy is latency times 693 mW.
  const HardwareModel d;
  const auto sim = Simulate(PlanTiling(GraphSpec::DefaultStudent(), d), d);
  CHECK(sim.latency_ms == doctest::Approx(1000.0 * sim.total_cycles / 175e6));
  CHECK(sim.energy_j == doctest::Approx(sim.latency_ms / 1000.0 * 0.693));
  CHECK(sim.dma_busy_fraction > 0.0);
  CHECK(sim.compute_busy_fraction > 0.0);
  CHECK(sim.compute_busy_fraction <= 1.0);
}

TEST_CASE("report json and trace csv") {
  const HardwareModel hw;
  const TilePlan plan = PlanTiling(GraphSpec::DefaultStudent(), hw);
  for (bool two : {false, true}) {
    const auto r = Simulate(plan, hw, {SimMode::kPipelined, two});
    const auto j = ReportToJson(r);
    const auto back = ReportFromJson(j);
    CHECK(back.total_cycles == r.total_cycles);
    CHECK(back.layers == r.layers);
    CHECK(back.options.separate_store_engine == two);
    CHECK(ReportToJson(back).dump() == j.dump());
    CHECK(ReportToJson(ReportFromJson(nlohmann::ordered_json::parse(j.dump(2)))).dump() == j.dump());
  }
  const auto layers = BuildSchedule(plan, hw);
  const auto r = Simulate(layers, hw);
  const std::string csv = TraceToCsv(r.events, layers);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "cycle_start,cycle_end,kind,layer,tile,buffer");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == r.events.size());
}
