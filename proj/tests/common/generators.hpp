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

#ifndef QVQA_TESTS_GENERATORS_HPP_
#define QVQA_TESTS_GENERATORS_HPP_

#include <random>
#include <vector>

#include "oracles.hpp"
#include "qvqa/sim.hpp"

namespace qvqa::oracle {

inline HardwareModel Roomy() {
  HardwareModel hw;
  hw.l1_bytes = 1 << 20;
  hw.l2_bytes = 1 << 22;
  hw.dram_bytes = 1 << 24;
  return hw;
}

inline nn::ConvSpec RandomConvSpec(std::mt19937_64& rng, std::size_t in, std::size_t out, bool separable,
                            bool text) {
  nn::ConvSpec c;
  c.kernel_h = Pick(rng, 1, 3);
  c.kernel_w = text ? 1 : Pick(rng, 1, 3);
  c.stride = text ? 1 : Pick(rng, 1, 2);
  c.padding = text || Pick(rng, 0, 1) ? nn::Padding::kSame : nn::Padding::kValid;
  c.in_channels = in;
  c.out_channels = out;
  c.depthwise_separable = separable;
  return c;
}

// A small random graph covering every layer kind the lowering can emit.
inline GraphSpec RandomGraph(std::mt19937_64& rng, std::size_t vocab) {
  for (;;) {
    GraphSpec s;
    const bool teacher = Pick(rng, 0, 1);
    s.role = teacher ? ModelRole::kTeacher : ModelRole::kStudent;
    s.input_h = Pick(rng, 8, 16);
    s.input_w = Pick(rng, 8, 16);
    s.input_c = 3;
    std::size_t c = 3;
    for (std::size_t i = Pick(rng, 1, 3); i > 0; --i) {
      const std::size_t out = Pick(rng, 2, 6);
      const bool separable = !teacher || Pick(rng, 0, 1);
      s.image_branch.push_back({RandomConvSpec(rng, c, out, separable, false), Pick(rng, 0, 1) == 1,
                                teacher && Pick(rng, 0, 2) == 0 ? 2u : 0u});
      c = out;
    }
    s.text.vocab_size = vocab;
    s.text.embed_dim = Pick(rng, 2, 6);
    s.text.max_question_len = 12;
    std::size_t e = s.text.embed_dim;
    for (std::size_t i = Pick(rng, 0, 2); i > 0; --i) {
      const std::size_t out = Pick(rng, 2, 6);
      s.text.convs.push_back({RandomConvSpec(rng, e, out, !teacher || Pick(rng, 0, 1), true),
                              Pick(rng, 0, 1) == 1, 0});
      e = out;
    }
    s.text.lstm = {e, Pick(rng, 2, 6), Pick(rng, 1, 2)};
    const std::size_t f = Pick(rng, 1, 4);
    s.fusion = {f * Pick(rng, 1, 4), f, 0.1};
    s.num_answers = 4;
    try {
      const auto shapes = ImageStageShapes(s);
      s.grid_h = shapes.back()[0];
      s.grid_w = shapes.back()[1];
      s.Validate();
      return s;
    } catch (const Error&) {
    }
  }
}

inline std::vector<LayerSchedule> RandomSchedule(std::mt19937_64& rng, std::size_t max_tiles) {
  std::uniform_int_distribution<std::uint64_t> cost(1, 60);
  std::vector<LayerSchedule> layers(Pick(rng, 1, 5));
  for (auto& l : layers) {
    l.name = "l";
    const bool streamed = Pick(rng, 0, 2) == 0;
    l.resident_weights = !streamed && Pick(rng, 0, 1) ? cost(rng) : 0;
    for (std::size_t t = Pick(rng, 1, max_tiles); t > 0; --t) {
      l.tiles.push_back({cost(rng), streamed ? cost(rng) : 0, cost(rng), cost(rng)});
    }
  }
  return layers;
}

inline GraphSpec RandomStudent(std::mt19937_64& rng) {
  GraphSpec s = GraphSpec::DefaultStudent();
  std::size_t c = 3;
  for (auto& l : s.image_branch) {
    l.conv.in_channels = c;
    c = 8 * Pick(rng, 1, 8);
    l.conv.out_channels = c;
  }
  s.text.lstm.hidden_dim = 16 * Pick(rng, 1, 5);
  return s;
}

}  // namespace qvqa::oracle

#endif  // QVQA_TESTS_GENERATORS_HPP_
