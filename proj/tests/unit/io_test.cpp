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

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <unistd.h>

#include "qvqa/io.hpp"
#include "qvqa/sim.hpp"
#include "testing.hpp"

using namespace qvqa;
using namespace qvqa::testing;

namespace {

using Bytes = std::vector<std::uint8_t>;

const fs::path kScratchDir = fs::temp_directory_path() / ("qvqa_io_test_" + std::to_string(::getpid()));

struct RemoveScratch {
  ~RemoveScratch() {
    std::error_code ec;
    fs::remove_all(kScratchDir, ec);
  }
} remove_scratch;

fs::path Scratch(const std::string& name) {
  fs::create_directories(kScratchDir);
  return kScratchDir / name;
}

Bytes FromString(const std::string& s) { return Bytes(s.begin(), s.end()); }

QuantModel SmallQuantModel(const GraphSpec& spec, std::uint64_t seed) {
  const auto ds = MakeColorDataset(2, spec.input_h, spec.input_w, spec.text.max_question_len, seed);
  std::vector<CalibrationSample> calib;
  for (const auto& x : ds.samples) calib.push_back({x.image, x.tokens});
  return QuantizeModel(BuildCheckModel(spec, seed), calib);
}

ErrorKind DecodeKind(const Bytes& b) {
  return KindOf([&] {
    if (PeekPrecision(b) == ModelPrecision::kFloat) {
      DecodeModel(b);
    } else {
      DecodeQuantModel(b);
    }
  });
}

void PutU32(Bytes& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

}  // namespace

TEST_CASE("model files round trip bitwise") {
  for (const GraphSpec& spec : {TinyStudentSpec(), TinyTeacherSpec(), GraphSpec::DefaultStudent()}) {
    const Model m = BuildModel(spec, 3);
    const Bytes fb = EncodeModel(m);
    CHECK(std::memcmp(fb.data(), "TVQM", 4) == 0);
    CHECK(fb[4] == 1);
    CHECK(PeekPrecision(fb) == ModelPrecision::kFloat);
    const Model back = DecodeModel(fb);
    CHECK(back == m);
    CHECK(EncodeModel(back) == fb);

    const QuantModel q = SmallQuantModel(spec, 4);
    const Bytes qb = EncodeModel(q);
    CHECK(PeekPrecision(qb) == ModelPrecision::kInt8);
    const QuantModel qback = DecodeQuantModel(qb);
    CHECK(qback == q);
    CHECK(EncodeModel(qback) == qb);
    CHECK(KindOf([&] { DecodeModel(qb); }) == ErrorKind::kFormat);
    CHECK(KindOf([&] { DecodeQuantModel(fb); }) == ErrorKind::kFormat);
  }
}

TEST_CASE("model files survive the file system") {
  const QuantModel q = SmallQuantModel(TinyStudentSpec(), 5);
  const fs::path p = Scratch("q.tvqm");
  SaveModel(q, p);
  CHECK_FALSE(fs::exists(p.string() + ".tmp"));
  CHECK(PeekModelPrecision(p) == ModelPrecision::kInt8);
  CHECK(LoadQuantModel(p) == q);
  CHECK(ReadFileBytes(p) == EncodeModel(q));
  CHECK(KindOf([] { LoadModel("/nonexistent/model.tvqm"); }) == ErrorKind::kIo);
}

TEST_CASE("corruption is rejected deterministically") {
  const Bytes good = EncodeModel(BuildModel(TinyStudentSpec(), 6));
  const Bytes goodq = EncodeModel(SmallQuantModel(TinyStudentSpec(), 6));

  for (const Bytes* src : {&good, &goodq}) {
    // A flip anywhere in the tensor payload region fails the checksum.
    for (std::size_t at = src->size() - 200; at < src->size(); ++at) {
      Bytes b = *src;
      b[at] ^= 0x10;
      const ErrorKind k = DecodeKind(b);
      CHECK(k == DecodeKind(b));
      if (at + 4 >= src->size()) CHECK(k == ErrorKind::kCorruptFile);
    }
    // Any single flip is rejected with a file-level error, never accepted.
    std::mt19937_64 rng(7);
    for (int n = 0; n < 300; ++n) {
      Bytes b = *src;
      b[Pick(rng, 0, b.size() - 1)] ^= static_cast<std::uint8_t>(1u << Pick(rng, 0, 7));
      const ErrorKind k = DecodeKind(b);
      const std::set<ErrorKind> file_level{ErrorKind::kCorruptFile, ErrorKind::kFormat,
                                           ErrorKind::kUnsupportedVersion};
      CHECK(file_level.count(k) == 1);
    }
    Bytes payload = *src;
    payload[payload.size() - 12] ^= 0x01;
    CHECK(DecodeKind(payload) == ErrorKind::kCorruptFile);

    Bytes version = *src;
    PutU32(version, 4, 2);
    CHECK(DecodeKind(version) == ErrorKind::kUnsupportedVersion);

    for (std::size_t keep : {std::size_t{0}, std::size_t{3}, std::size_t{13}, src->size() / 2, src->size() - 1}) {
      const Bytes cut(src->begin(), src->begin() + static_cast<std::ptrdiff_t>(keep));
      CHECK(KindOf([&] { DecodeModel(cut); DecodeQuantModel(cut); }) == ErrorKind::kFormat);
    }
    Bytes magic = *src;
    magic[0] = 'X';
    CHECK(DecodeKind(magic) == ErrorKind::kFormat);
    Bytes longer = *src;
    longer.push_back(0);
    CHECK(DecodeKind(longer) == ErrorKind::kFormat);
  }
}

TEST_CASE("raw tensors") {
  std::mt19937_64 rng(8);
  const RealTensor t = Random(Shape{3, 4, 2}, rng);
  const RawTensor raw = ToRaw(t);
  CHECK(raw.dtype == RawDtype::kF64);
  CHECK(raw.dims == std::vector<std::size_t>{3, 4, 2});
  const Bytes b = EncodeRawTensor(raw);
  CHECK(std::memcmp(b.data(), "TVQT", 4) == 0);
  CHECK(b.size() == 4 + 4 + 4 + 3 * 4 + 24 * 8);
  CHECK(DecodeRawTensor(b) == raw);
  CHECK(EncodeRawTensor(DecodeRawTensor(b)) == b);
  CHECK(RealFromRaw(DecodeRawTensor(b)) == t);

  const RawTensor i8{RawDtype::kI8, {2, 2}, {1, 2, 3, 4}};
  CHECK(DecodeRawTensor(EncodeRawTensor(i8)) == i8);
  CHECK(KindOf([&] { RealFromRaw(i8); }) == ErrorKind::kUnsupported);
  Bytes cut = b;
  cut.pop_back();
  CHECK(KindOf([&] { DecodeRawTensor(cut); }) == ErrorKind::kFormat);

  const fs::path p = Scratch("t.tvqt");
  SaveRawTensor(raw, p);
  CHECK(LoadRawTensor(p) == raw);
  CHECK(LoadImage(p) == t);
}

TEST_CASE("netpbm ingestion") {
  const Bytes p5 = FromString(std::string("P5\n2 2\n255\n") + std::string(4, '\xff'));
  const RealTensor ones = DecodeNetpbm(p5);
  CHECK(ones.shape() == Shape{2, 2, 1});
  CHECK(ones.vec() == std::vector<double>(4, 1.0));

  const Bytes p6 = FromString(std::string("P6\n# comment\n1 1\n255\n\x00\x80\xff", 24));
  const RealTensor rgb = DecodeNetpbm(p6);
  CHECK(rgb.shape() == Shape{1, 1, 3});
  CHECK(rgb[0] == 0.0);
  CHECK(rgb[1] == doctest::Approx(128.0 / 255.0));
  CHECK(rgb[2] == 1.0);

  CHECK(KindOf([] { DecodeNetpbm(FromString("P6\n2 2\n65535\n" + std::string(24, '\0'))); }) ==
        ErrorKind::kUnsupported);
  CHECK(KindOf([] { DecodeNetpbm(FromString("P5\n2 2\n255\n\x01")); }) == ErrorKind::kFormat);
  CHECK(KindOf([] { DecodeNetpbm(FromString("P2\n1 1\n255\n1")); }) == ErrorKind::kFormat);

  std::mt19937_64 rng(9);
  for (std::size_t c : {1u, 3u}) {
    RealTensor img = Random(Shape{5, 7, c}, rng, 0, 1);
    for (auto& v : img.data()) v = std::round(v * 255) / 255;
    const Bytes enc = EncodeNetpbm(img);
    CHECK(DecodeNetpbm(enc) == img);
    CHECK(EncodeNetpbm(DecodeNetpbm(enc)) == enc);
    const fs::path p = Scratch(c == 1 ? "i.pgm" : "i.ppm");
    SaveImage(img, p);
    CHECK(LoadImage(p) == img);
  }
}

TEST_CASE("text files and datasets") {
  const fs::path vocab = Scratch("vocab.txt");
  WriteFileAtomic(vocab, std::string("what\n\ncolor\nis\n"));
  CHECK(LoadLines(vocab) == std::vector<std::string>{"what", "color", "is"});
  SaveLines({"a", "b"}, vocab);
  CHECK(LoadLines(vocab) == std::vector<std::string>{"a", "b"});

  const auto ds = MakeColorDataset(6, 12, 12, 12, 10);
  const fs::path dir = Scratch("dataset");
  SaveDataset(ds, dir);
  const Dataset back = LoadDataset(dir, 12);
  CHECK(back.vocab == ds.vocab);
  CHECK(back.answers == ds.answers);
  REQUIRE(back.samples.size() == ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(back.samples[i].label == ds.samples[i].label);
    CHECK(back.samples[i].tokens == ds.samples[i].tokens);
    CHECK(back.questions[i] == ds.sample_questions[i]);
    REQUIRE(back.samples[i].image.shape() == ds.samples[i].image.shape());
    for (std::size_t k = 0; k < ds.samples[i].image.numel(); ++k) {
      REQUIRE(std::abs(back.samples[i].image[k] - ds.samples[i].image[k]) <= 0.5 / 255 + 1e-12);
    }
  }

  std::ofstream(dir / "index.tsv", std::ios::app) << "images/0.ppm\twhat\t99\t-\n";
  CHECK(KindOf([&] { LoadDataset(dir, 12); }) == ErrorKind::kLabel);
}

TEST_CASE("plans and reports round trip through files") {
  const HardwareModel hw;
  const TilePlan plan = PlanTiling(GraphSpec::DefaultStudent(), hw);
  const fs::path p = Scratch("plan.json");
  WriteFileAtomic(p, PlanToJson(plan).dump(2));
  const auto bytes = ReadFileBytes(p);
  const auto j = nlohmann::ordered_json::parse(bytes.begin(), bytes.end());
  CHECK(PlanFromJson(j) == plan);
  CHECK(PlanToJson(PlanFromJson(j)).dump(2) == std::string(bytes.begin(), bytes.end()));

  const auto report = ReportToJson(Simulate(plan, hw));
  const fs::path r = Scratch("report.json");
  WriteFileAtomic(r, report.dump(2));
  const auto rb = ReadFileBytes(r);
  CHECK(ReportToJson(ReportFromJson(nlohmann::ordered_json::parse(rb.begin(), rb.end()))).dump(2) ==
        std::string(rb.begin(), rb.end()));
}
