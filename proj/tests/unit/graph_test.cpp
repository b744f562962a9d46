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
#include <random>

#include "qvqa/distill.hpp"
#include "qvqa/model.hpp"
#include "qvqa/vocab.hpp"
#include "testing.hpp"

using namespace qvqa;
using namespace qvqa::testing;

namespace {

std::vector<std::int32_t> RandomTokens(std::mt19937_64& rng, const GraphSpec& s) {
  std::vector<std::int32_t> t(s.text.max_question_len, kPadId);
  const std::size_t n = Pick(rng, 1, s.text.max_question_len);
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<std::int32_t>(Pick(rng, 1, s.text.vocab_size - 1));
  return t;
}

std::size_t Argmax(const RealTensor& t) {
  return static_cast<std::size_t>(std::max_element(t.data().begin(), t.data().end()) - t.data().begin());
}

double Sum(const RealTensor& t) {
  long double s = 0;
  for (double v : t.data()) s += v;
  return static_cast<double>(s);
}

}  // namespace

TEST_CASE("default student is a valid separable-only graph") {
  const auto s = GraphSpec::DefaultStudent();
  CHECK_NOTHROW(s.Validate());
  CHECK(s.image_branch.size() == 3);
  CHECK(s.text.lstm.num_layers == 1);
  CHECK(s.grid_h == 8);
  CHECK(s.grid_w == 8);
  CHECK(s.text.max_question_len == 12);
  CHECK(s.fusion.joint_dim == 320);
  CHECK(s.fusion.factor == 5);
  for (const auto& l : s.image_branch) CHECK(l.conv.depthwise_separable);
  for (const auto& l : s.text.convs) CHECK(l.conv.depthwise_separable);
  const auto stages = ImageStageShapes(s);
  CHECK(stages.back() == Shape{8, 8, 64});
}

TEST_CASE("teacher presets validate") {
  CHECK_NOTHROW(GraphSpec::DefaultTeacher().Validate());
  const auto t224 = GraphSpec::Teacher224(1024);
  CHECK_NOTHROW(t224.Validate());
  CHECK(t224.input_h == 224);
  CHECK(t224.grid_h == 14);
  CHECK(t224.grid_channels() == 1024);
  CHECK(GraphSpec::DefaultTeacher().text.lstm.num_layers == 2);
}

TEST_CASE("spec validation rejects bad graphs") {
  auto s = GraphSpec::DefaultStudent();
  s.image_branch[1].conv.depthwise_separable = false;
  CHECK(KindOf([&] { s.Validate(); }) == ErrorKind::kConfig);

  s = GraphSpec::DefaultStudent();
  s.image_branch[1].conv.in_channels = 7;
  CHECK(KindOf([&] { s.Validate(); }) == ErrorKind::kConfig);

  s = GraphSpec::DefaultStudent();
  s.grid_h = 4;
  CHECK(KindOf([&] { s.Validate(); }) == ErrorKind::kConfig);

  s = GraphSpec::DefaultStudent();
  s.fusion.factor = 3;  // 320 is not a multiple of 3
  CHECK(KindOf([&] { s.Validate(); }) == ErrorKind::kConfig);
}

TEST_CASE("spec json round trip") {
  for (const auto& s : {GraphSpec::DefaultStudent(), GraphSpec::DefaultTeacher(),
                        GraphSpec::Teacher224(512), TinyStudentSpec(), TinyTeacherSpec()}) {
    const auto j = GraphSpecToJson(s);
    CHECK(GraphSpecFromJson(j) == s);
    CHECK(GraphSpecToJson(GraphSpecFromJson(j)).dump() == j.dump());
  }
}

TEST_CASE("vocabulary and tokenizer") {
  const Vocabulary v({"what", "color", "is", "the", "square"}, 6);
  CHECK(v.id("what") == 1);
  CHECK(v.id("square") == 5);
  CHECK(v.unk_id() == 6);
  CHECK(v.id("zebra") == 6);
  CHECK(v.table_size() == 7);
  CHECK(Tokenize("What COLOR is the square?", v) == std::vector<std::int32_t>{1, 2, 3, 4, 5, 0});
  CHECK(Tokenize("what what what what what what what", v).size() == 6);
  CHECK(Tokenize("the zebra", v) == std::vector<std::int32_t>{4, 6, 0, 0, 0, 0});
  CHECK(KindOf([&] { Tokenize(" ?! ", v); }) == ErrorKind::kEmptyQuestion);
  CHECK(KindOf([] { Vocabulary({"a", "a"}, 3); }) == ErrorKind::kFormat);
  const Vocabulary with_unk({"a", std::string(kUnkToken), "b"}, 3);
  CHECK(with_unk.id("zzz") == 2);
}

TEST_CASE("model build is deterministic and matches the layout") {
  const auto s = GraphSpec::DefaultStudent();
  const Model a = BuildModel(s, 5), b = BuildModel(s, 5), c = BuildModel(s, 6);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  const auto layout = ParameterLayout(s);
  CHECK(layout.size() == a.params.size());
  std::size_t count = 0;
  for (const auto& p : layout) {
    REQUIRE(a.params.count(p.name) == 1);
    CHECK(a.params.at(p.name).shape() == p.shape);
    count += p.shape.numel();
  }
  CHECK(a.ParameterCount() == count);
  auto broken = a.params;
  broken.erase(broken.begin());
  CHECK(KindOf([&] { ValidateParams(s, broken); }) == ErrorKind::kConfig);
}

TEST_CASE("attention and answers are distributions on random inputs") {
  const auto s = GraphSpec::DefaultStudent();
  const Model m = BuildModel(s, 21);
  std::mt19937_64 rng(22);
  for (int n = 0; n < 100; ++n) {
    const auto img = Random(Shape{s.input_h, s.input_w, s.input_c}, rng, 0, 1);
    const auto tokens = RandomTokens(rng, s);
    const auto out = ForwardVqa(m, img, tokens);
    for (double v : out.attention.weights.data()) REQUIRE(v >= 0.0);
    for (double v : out.answer_probs.data()) REQUIRE(v >= 0.0);
    REQUIRE(std::abs(Sum(out.attention.weights) - 1.0) <= 1e-6);
    REQUIRE(std::abs(Sum(out.answer_probs) - 1.0) <= 1e-9);
    REQUIRE(out.attention.weights.shape() == Shape{s.grid_h, s.grid_w});

    const std::size_t cell = Argmax(out.attention.weights);
    for (double c : {0.01, 0.5, 3.0, 100.0}) {
      RealTensor scaled = out.attention_logits;
      for (auto& v : scaled.data()) v *= c;
      REQUIRE(Argmax(nn::SoftmaxWithTemperature(scaled, 1.0)) == cell);
    }
  }
}

TEST_CASE("inference is a pure function of weights and inputs") {
  const auto s = GraphSpec::DefaultStudent();
  const Model m = BuildModel(s, 31);
  std::mt19937_64 rng(32);
  const auto img = Random(Shape{s.input_h, s.input_w, s.input_c}, rng, 0, 1);
  const auto tokens = RandomTokens(rng, s);
  const auto a = ForwardVqa(m, img, tokens), b = ForwardVqa(m, img, tokens);
  CHECK(a.answer_probs == b.answer_probs);
  CHECK(a.attention.weights == b.attention.weights);
  ForwardOptions train{true, 4};
  CHECK(ForwardVqa(m, img, tokens, train).answer_logits == ForwardVqa(m, img, tokens, train).answer_logits);
}

TEST_CASE("integer forward also yields distributions") {
  const auto s = GraphSpec::DefaultStudent();
  const Model m = BuildModel(s, 41);
  std::mt19937_64 rng(42);
  std::vector<CalibrationSample> calib;
  for (int i = 0; i < 4; ++i) calib.push_back({Random(Shape{64, 64, 3}, rng, 0, 1), RandomTokens(rng, s)});
  const QuantModel q = QuantizeModel(m, calib);
  for (int n = 0; n < 10; ++n) {
    const auto out = ForwardVqa(q, Random(Shape{64, 64, 3}, rng, 0, 1), RandomTokens(rng, s));
    CHECK(std::abs(Sum(out.attention.weights) - 1.0) <= 1e-6);
    CHECK(std::abs(Sum(out.answer_probs) - 1.0) <= 1e-9);
  }
}

TEST_CASE("token handling") {
  const auto s = GraphSpec::DefaultStudent();
  CHECK(ActiveTokens(std::vector<std::int32_t>{3, 4, 0, 7}, s) == std::vector<std::int32_t>{3, 4});
  CHECK(KindOf([&] { ActiveTokens(std::vector<std::int32_t>{0, 0}, s); }) == ErrorKind::kEmptyQuestion);
  const std::int32_t too_big = static_cast<std::int32_t>(s.text.vocab_size);
  CHECK(KindOf([&] { ActiveTokens(std::vector<std::int32_t>{too_big}, s); }) == ErrorKind::kShape);
}

TEST_CASE("masks and attention loss") {
  RealTensor raw(Shape{4, 4});
  for (std::size_t i = 0; i < 4; ++i) raw[i] = 1.0;  // top row
  const auto grid = ResampleMask({raw}, 2, 2);
  CHECK(grid.mask.vec() == std::vector<double>{0.5, 0.5, 0.0, 0.0});
  const auto norm = NormalizeMask(grid);
  CHECK(norm.vec() == std::vector<double>{0.5, 0.5, 0.0, 0.0});
  CHECK(AttentionLoss({norm}, grid) == 0.0);
  const AttentionMap uniform{RealTensor::Filled(Shape{2, 2}, 0.25)};
  CHECK(AttentionLoss(uniform, grid) == doctest::Approx((0.0625 * 2 + 0.0625 * 2) / 4));
  CHECK(NormalizeMask({RealTensor(Shape{2, 2})}).vec() == std::vector<double>(4, 0.25));
  CHECK(KindOf([&] { ResampleMask({raw}, 3, 3); }) == ErrorKind::kShape);
  RealTensor neg(Shape{2, 2});
  neg[0] = -1;
  CHECK(KindOf([&] { NormalizeMask({neg}); }) == ErrorKind::kInvalidTensor);
}
