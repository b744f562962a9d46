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

#include "selftest.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "qvqa/distill.hpp"
#include "qvqa/io.hpp"
#include "qvqa/sim.hpp"

namespace {

using namespace qvqa;

struct Suite {
  std::string name;
  std::size_t passed = 0, total = 0;
  void Check(bool ok) {
    ++total;
    passed += ok ? 1 : 0;
  }
};

HardwareModel RoomyHardware() {
  HardwareModel hw;
  hw.l1_bytes = 1 << 20;
  hw.l2_bytes = 1 << 22;
  hw.dram_bytes = 1 << 24;
  return hw;
}

void Quantization(Suite& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> scale(1e-4, 1.0);
  std::uniform_int_distribution<int> zp(-128, 127);
  for (int trial = 0; trial < 20; ++trial) {
    const QuantParams qp{scale(rng), zp(rng)};
    bool ok = true;
    for (int q = -128; q <= 127; ++q) {
      const double x = qp.scale * (q - qp.zero_point);
      ok = ok && QuantizeValue(x, qp) == q;
      const double nudged = x + 0.49 * qp.scale;
      const double back = qp.scale * (QuantizeValue(nudged, qp) - qp.zero_point);
      ok = ok && (q == 127 || std::abs(back - nudged) <= qp.scale / 2);
    }
    s.Check(ok);
  }
  std::uniform_int_distribution<std::int32_t> acc(-(1 << 24), 1 << 24);
  std::uniform_real_distribution<double> eff(1e-6, 0.99);
  for (int trial = 0; trial < 20; ++trial) {
    const std::int32_t a = acc(rng);
    const double e = eff(rng);
    const int z = zp(rng);
    s.Check(std::abs(Requantize(a, e, z) - RequantizeReference(a, e, z)) <= 1);
  }
}

void Distillation(Suite& s, std::mt19937_64& rng) {
  const RealTensor half(Shape{2}, {0.5, 0.5});
  s.Check(std::abs(KdLoss({RealTensor(Shape{2}, {1.0, 0.0}), 1.0}, half) - std::log(2.0)) < 1e-12);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    RealTensor logits(Shape{5});
    for (auto& v : logits.data()) v = n(rng);
    const auto t = MakeSoftTargets(logits, 3.0);
    s.Check(KdLoss(t, t.probs) == 0.0);
  }
}

void GradientChecks(Suite& s, std::uint64_t seed) {
  TrainConfig cfg;
  for (const GraphSpec& spec : {TinyStudentSpec(), TinyTeacherSpec()}) {
    const Model m = BuildCheckModel(spec, seed);
    const auto ds = MakeColorDataset(1, spec.input_h, spec.input_w, spec.text.max_question_len, seed);
    const auto teacher = ForwardVqa(BuildCheckModel(spec, seed + 1), ds.samples[0].image, ds.samples[0].tokens);
    s.Check(GradCheck(m, ds.samples[0], teacher.answer_logits, cfg).max_relative_error < 1e-4);
  }
}

void Tiling(Suite& s, std::uint64_t seed) {
  const GraphSpec spec = TinyStudentSpec();
  const auto ds = MakeColorDataset(4, spec.input_h, spec.input_w, spec.text.max_question_len, seed);
  std::vector<CalibrationSample> calib;
  for (const auto& x : ds.samples) calib.push_back({x.image, x.tokens});
  const QuantModel qm = QuantizeModel(BuildCheckModel(spec, seed), calib);
  const TilePlan base = PlanTiling(spec, RoomyHardware());
  const LoweredGraph graph = LowerGraph(spec);
  QuantTrace want;
  const auto ref = ForwardVqa(qm, ds.samples[0].image, ds.samples[0].tokens, &want);
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    if (!graph.layers[i].row_tiled) continue;
    for (std::size_t rows = 1; rows <= graph.layers[i].out_rows; ++rows) {
      QuantTrace got;
      const auto out = TiledExecute(qm, WithTileRows(base, i, rows), ds.samples[0].image, ds.samples[0].tokens, &got);
      s.Check(got.tensors == want.tensors && got.pooled == want.pooled && out.answer_probs == ref.answer_probs);
    }
  }
}

void Simulator(Suite& s, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint64_t> cost(1, 50);
  std::uniform_int_distribution<std::size_t> tiles(1, 8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<LayerSchedule> layers(3);
    for (auto& l : layers) {
      l.resident_weights = cost(rng) % 3 == 0 ? 0 : cost(rng);
      for (std::size_t t = tiles(rng); t > 0; --t) l.tiles.push_back({cost(rng), 0, cost(rng), cost(rng)});
    }
    const auto p = Simulate(layers, HardwareModel{});
    const auto q = Simulate(layers, HardwareModel{}, {SimMode::kSerial, false});
    s.Check(p.total_cycles <= q.total_cycles && ValidateTrace(p.events, false).empty() &&
            ValidateTrace(q.events, false).empty());
  }
}

void Serialization(Suite& s, std::uint64_t seed) {
  const GraphSpec spec = TinyStudentSpec();
  const Model m = BuildCheckModel(spec, seed);
  const auto bytes = EncodeModel(m);
  s.Check(EncodeModel(DecodeModel(bytes)) == bytes);
  auto flipped = bytes;
  flipped[flipped.size() - 10] ^= 0x01;
  try {
    DecodeModel(flipped);
    s.Check(false);
  } catch (const Error& e) {
    s.Check(e.kind() == ErrorKind::kCorruptFile);
  }
  const auto ds = MakeColorDataset(2, spec.input_h, spec.input_w, spec.text.max_question_len, seed);
  std::vector<CalibrationSample> calib;
  for (const auto& x : ds.samples) calib.push_back({x.image, x.tokens});
  const auto qbytes = EncodeModel(QuantizeModel(m, calib));
  s.Check(EncodeModel(DecodeQuantModel(qbytes)) == qbytes);
  const TilePlan plan = PlanTiling(spec, HardwareModel{});
  s.Check(PlanToJson(PlanFromJson(PlanToJson(plan))).dump() == PlanToJson(plan).dump());
}

}  // namespace

bool RunSelfTest(std::uint64_t seed, std::ostream& out) {
  std::mt19937_64 rng(seed);
  std::vector<std::pair<std::string, std::function<void(Suite&)>>> suites = {
      {"quantization", [&](Suite& s) { Quantization(s, rng); }},
      {"distillation", [&](Suite& s) { Distillation(s, rng); }},
      {"gradients", [&](Suite& s) { GradientChecks(s, seed); }},
      {"tiling", [&](Suite& s) { Tiling(s, seed); }},
      {"simulator", [&](Suite& s) { Simulator(s, rng); }},
      {"serialization", [&](Suite& s) { Serialization(s, seed); }},
  };
  bool all = true;
  for (auto& [name, fn] : suites) {
    Suite s{name};
    try {
      fn(s);
    } catch (const std::exception& e) {
      out << name << ": exception: " << e.what() << "\n";
      s.total += 1;
    }
    out << name << ": " << s.passed << "/" << s.total << " passed\n";
    all = all && s.passed == s.total;
  }
  out << (all ? "selftest passed" : "selftest FAILED") << "\n";
  return all;
}
