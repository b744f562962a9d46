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

#include "qvqa/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "qvqa/lowering.hpp"

namespace qvqa {
namespace {

constexpr char kModelMagic[4] = {'T', 'V', 'Q', 'M'};
constexpr char kTensorMagic[4] = {'T', 'V', 'Q', 'T'};
constexpr std::uint32_t kModelVersion = 1;

static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");

class Writer {
 public:
  void Bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  template <typename T>
  void Put(T v) {
    Bytes(&v, sizeof v);
  }
  void Name(const std::string& s) {
    Require(s.size() <= 0xFFFF, ErrorKind::kFormat, "name too long");
    Put<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
    Bytes(s.data(), s.size());
  }
  void Dims(const Shape& shape) {
    Put<std::uint8_t>(static_cast<std::uint8_t>(shape.rank()));
    for (std::size_t d : shape.dims()) Put<std::uint32_t>(static_cast<std::uint32_t>(d));
  }

  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  Reader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}

  void Bytes(void* dst, std::size_t n) {
    if (n > n_ - pos_) Fail(ErrorKind::kFormat, "file is truncated");
    std::memcpy(dst, p_ + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T Get() {
    T v;
    Bytes(&v, sizeof v);
    return v;
  }
  std::string Name() {
    std::string s(Get<std::uint16_t>(), '\0');
    Bytes(s.data(), s.size());
    return s;
  }
  std::vector<std::size_t> Dims(std::size_t rank) {
    std::vector<std::size_t> dims;
    for (std::size_t i = 0; i < rank; ++i) dims.push_back(Get<std::uint32_t>());
    return dims;
  }
  std::size_t remaining() const { return n_ - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

std::uint32_t Crc32(const std::uint8_t* p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::size_t Numel(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) {
    Require(d > 0 && n <= (std::size_t{1} << 40) / d, ErrorKind::kFormat, "bad tensor extent");
    n *= d;
  }
  return n;
}

// Structural view of a model file, before checksum and semantic checks.
struct RawRecord {
  std::string name;
  std::uint8_t dtype = 0;
  std::vector<std::size_t> dims;
  double scale = 1.0;
  std::int32_t zero_point = 0;
  std::vector<std::uint8_t> payload;
};

struct RawModel {
  std::uint8_t role = 0;
  ModelPrecision precision = ModelPrecision::kFloat;
  std::string spec_json;
  std::vector<RawRecord> records;
  std::vector<std::pair<std::string, QuantParams>> activations;
};

std::size_t DtypeSize(std::uint8_t dtype) {
  switch (dtype) {
    case 0: return 8;
    case 1: return 1;
    case 2: return 4;
  }
  Fail(ErrorKind::kFormat, "unknown tensor dtype " + std::to_string(dtype));
}

void CheckHeader(const std::vector<std::uint8_t>& bytes) {
  Require(bytes.size() >= 14 && std::memcmp(bytes.data(), kModelMagic, 4) == 0, ErrorKind::kFormat,
          "not a model file");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  Require(version == kModelVersion, ErrorKind::kUnsupportedVersion,
          "model file version " + std::to_string(version) + " is not supported");
}

RawModel ParseModel(const std::vector<std::uint8_t>& bytes) {
  CheckHeader(bytes);
  Reader r(bytes.data(), bytes.size());
  r.Get<std::uint32_t>();
  r.Get<std::uint32_t>();
  RawModel m;
  m.role = r.Get<std::uint8_t>();
  const auto precision = r.Get<std::uint8_t>();
  Require(precision <= 1, ErrorKind::kFormat, "unknown model precision");
  m.precision = precision == 0 ? ModelPrecision::kFloat : ModelPrecision::kInt8;
  m.spec_json.resize(r.Get<std::uint32_t>());
  r.Bytes(m.spec_json.data(), m.spec_json.size());
  const std::uint32_t count = r.Get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    RawRecord rec;
    rec.name = r.Name();
    rec.dtype = r.Get<std::uint8_t>();
    const std::size_t size = DtypeSize(rec.dtype);
    rec.dims = r.Dims(r.Get<std::uint8_t>());
    if (rec.dtype != 0) rec.scale = r.Get<double>();
    if (rec.dtype == 1) rec.zero_point = r.Get<std::int32_t>();
    const std::size_t n = Numel(rec.dims) * size;
    Require(n <= r.remaining(), ErrorKind::kFormat, "file is truncated");
    rec.payload.resize(n);
    r.Bytes(rec.payload.data(), n);
    m.records.push_back(std::move(rec));
  }
  if (m.precision == ModelPrecision::kInt8) {
    const std::uint32_t acts = r.Get<std::uint32_t>();
    for (std::uint32_t i = 0; i < acts; ++i) {
      std::string name = r.Name();
      QuantParams qp;
      qp.scale = r.Get<double>();
      qp.zero_point = r.Get<std::int32_t>();
      m.activations.emplace_back(std::move(name), qp);
    }
  }
  Require(r.remaining() >= 4, ErrorKind::kFormat, "file is truncated");
  Require(r.remaining() == 4, ErrorKind::kFormat, "trailing bytes after the checksum");
  const std::size_t body = r.pos();
  const std::uint32_t stored = r.Get<std::uint32_t>();
  Require(stored == Crc32(bytes.data(), body), ErrorKind::kCorruptFile, "checksum mismatch");
  return m;
}

std::vector<std::uint8_t> Encode(const GraphSpec& spec, ModelPrecision precision,
                                 const std::vector<RawRecord>& records,
                                 const std::map<std::string, QuantParams>* activations) {
  Writer w;
  w.Bytes(kModelMagic, 4);
  w.Put<std::uint32_t>(kModelVersion);
  w.Put<std::uint8_t>(spec.role == ModelRole::kTeacher ? 0 : 1);
  w.Put<std::uint8_t>(precision == ModelPrecision::kFloat ? 0 : 1);
  const std::string json = GraphSpecToJson(spec).dump();
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(json.size()));
  w.Bytes(json.data(), json.size());
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(records.size()));
  for (const auto& rec : records) {
    w.Name(rec.name);
    w.Put<std::uint8_t>(rec.dtype);
    w.Put<std::uint8_t>(static_cast<std::uint8_t>(rec.dims.size()));
    for (std::size_t d : rec.dims) w.Put<std::uint32_t>(static_cast<std::uint32_t>(d));
    if (rec.dtype != 0) w.Put<double>(rec.scale);
    if (rec.dtype == 1) w.Put<std::int32_t>(rec.zero_point);
    w.Bytes(rec.payload.data(), rec.payload.size());
  }
  if (activations) {
    w.Put<std::uint32_t>(static_cast<std::uint32_t>(activations->size()));
    for (const auto& [name, qp] : *activations) {
      w.Name(name);
      w.Put<double>(qp.scale);
      w.Put<std::int32_t>(qp.zero_point);
    }
  }
  w.Put<std::uint32_t>(Crc32(w.out.data(), w.out.size()));
  return std::move(w.out);
}

template <typename T>
RawRecord Record(const std::string& name, std::uint8_t dtype, const Tensor<T>& t) {
  RawRecord rec;
  rec.name = name;
  rec.dtype = dtype;
  rec.dims = t.shape().dims();
  rec.payload.resize(t.numel() * sizeof(T));
  std::memcpy(rec.payload.data(), t.data().data(), rec.payload.size());
  return rec;
}

template <typename T>
Tensor<T> FromRecord(const RawRecord& rec) {
  std::vector<T> data(rec.payload.size() / sizeof(T));
  std::memcpy(data.data(), rec.payload.data(), rec.payload.size());
  return Tensor<T>(Shape(rec.dims), std::move(data));
}

GraphSpec SpecOf(const RawModel& raw) {
  GraphSpec spec;
  try {
    spec = GraphSpecFromJson(nlohmann::ordered_json::parse(raw.spec_json));
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kFormat, std::string("model graph block: ") + e.what());
  }
  spec.Validate();
  Require((raw.role == 0) == (spec.role == ModelRole::kTeacher), ErrorKind::kFormat,
          "header role disagrees with the graph block");
  return spec;
}

std::set<std::string> RequiredActivations(const GraphSpec& spec) {
  std::set<std::string> names{"input"};
  for (const auto& d : LowerGraph(spec).layers) {
    if (d.kind != LayerKind::kSumPool && d.kind != LayerKind::kAnswer) names.insert(d.name);
  }
  return names;
}

void ValidateQuantModel(const QuantModel& m) {
  m.spec.Validate();
  std::size_t weights = 0, biases = 0;
  for (const auto& info : ParameterLayout(m.spec)) {
    const bool bias = info.kind == ParamInfo::Kind::kBias || info.kind == ParamInfo::Kind::kLstmBias;
    if (bias) {
      ++biases;
      RequireShape(m.bias(info.name).values.shape(), info.shape, info.name);
    } else {
      ++weights;
      const QuantTensor& w = m.weight(info.name);
      RequireShape(w.shape(), info.shape, info.name);
      Require(w.qparams.zero_point == 0 && w.qparams.scale > 0.0, ErrorKind::kInvalidScale,
              "weight '" + info.name + "' is not symmetric");
    }
  }
  Require(weights == m.weights.size() && biases == m.biases.size(), ErrorKind::kConfig,
          "quantized model holds tensors its graph does not use");
  for (const auto& name : RequiredActivations(m.spec)) {
    Require(m.activation(name).scale > 0.0, ErrorKind::kInvalidScale,
            "activation '" + name + "' has a non-positive scale");
  }
}

std::string Trim(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, '\t')) out.push_back(field);
  return out;
}

}  // namespace

std::vector<std::uint8_t> EncodeModel(const Model& model) {
  ValidateParams(model.spec, model.params);
  std::vector<RawRecord> records;
  for (const auto& info : ParameterLayout(model.spec)) {
    records.push_back(Record(info.name, 0, model.param(info.name)));
  }
  return Encode(model.spec, ModelPrecision::kFloat, records, nullptr);
}

std::vector<std::uint8_t> EncodeModel(const QuantModel& model) {
  ValidateQuantModel(model);
  std::vector<RawRecord> records;
  for (const auto& info : ParameterLayout(model.spec)) {
    if (info.kind == ParamInfo::Kind::kBias || info.kind == ParamInfo::Kind::kLstmBias) {
      const BiasTensor& b = model.bias(info.name);
      auto rec = Record(info.name, 2, b.values);
      rec.scale = b.scale;
      records.push_back(std::move(rec));
    } else {
      const QuantTensor& w = model.weight(info.name);
      auto rec = Record(info.name, 1, w.values);
      rec.scale = w.qparams.scale;
      rec.zero_point = w.qparams.zero_point;
      records.push_back(std::move(rec));
    }
  }
  return Encode(model.spec, ModelPrecision::kInt8, records, &model.activations);
}

ModelPrecision PeekPrecision(const std::vector<std::uint8_t>& bytes) {
  CheckHeader(bytes);
  Require(bytes[9] <= 1, ErrorKind::kFormat, "unknown model precision");
  return bytes[9] == 0 ? ModelPrecision::kFloat : ModelPrecision::kInt8;
}

Model DecodeModel(const std::vector<std::uint8_t>& bytes) {
  const RawModel raw = ParseModel(bytes);
  Require(raw.precision == ModelPrecision::kFloat, ErrorKind::kFormat,
          "file holds a full-integer model, expected float");
  Model m;
  m.spec = SpecOf(raw);
  for (const auto& rec : raw.records) {
    Require(rec.dtype == 0, ErrorKind::kFormat, "float model tensor '" + rec.name + "' is not f64");
    Require(m.params.emplace(rec.name, FromRecord<double>(rec)).second, ErrorKind::kFormat,
            "tensor '" + rec.name + "' appears twice");
  }
  ValidateParams(m.spec, m.params);
  return m;
}

QuantModel DecodeQuantModel(const std::vector<std::uint8_t>& bytes) {
  const RawModel raw = ParseModel(bytes);
  Require(raw.precision == ModelPrecision::kInt8, ErrorKind::kFormat,
          "file holds a float model, expected full-integer");
  QuantModel m;
  m.spec = SpecOf(raw);
  for (const auto& rec : raw.records) {
    bool fresh = false;
    if (rec.dtype == 1) {
      Require(rec.zero_point >= -128 && rec.zero_point <= 127, ErrorKind::kFormat,
              "tensor '" + rec.name + "' zero point out of range");
      fresh = m.weights.emplace(rec.name, QuantTensor{FromRecord<std::int8_t>(rec), {rec.scale, rec.zero_point}})
                  .second;
    } else if (rec.dtype == 2) {
      fresh = m.biases.emplace(rec.name, BiasTensor{FromRecord<std::int32_t>(rec), rec.scale}).second;
    } else {
      Fail(ErrorKind::kFormat, "full-integer model tensor '" + rec.name + "' is f64");
    }
    Require(fresh, ErrorKind::kFormat, "tensor '" + rec.name + "' appears twice");
  }
  for (const auto& [name, qp] : raw.activations) {
    Require(m.activations.emplace(name, qp).second, ErrorKind::kFormat,
            "activation '" + name + "' appears twice");
  }
  ValidateQuantModel(m);
  return m;
}

void SaveModel(const Model& model, const fs::path& path) { WriteFileAtomic(path, EncodeModel(model)); }
void SaveModel(const QuantModel& model, const fs::path& path) { WriteFileAtomic(path, EncodeModel(model)); }
ModelPrecision PeekModelPrecision(const fs::path& path) { return PeekPrecision(ReadFileBytes(path)); }
Model LoadModel(const fs::path& path) { return DecodeModel(ReadFileBytes(path)); }
QuantModel LoadQuantModel(const fs::path& path) { return DecodeQuantModel(ReadFileBytes(path)); }

// ---- raw tensors ----

RawTensor ToRaw(const RealTensor& t) {
  RawTensor raw;
  raw.dtype = RawDtype::kF64;
  raw.dims = t.shape().dims();
  raw.payload.resize(t.numel() * sizeof(double));
  std::memcpy(raw.payload.data(), t.data().data(), raw.payload.size());
  return raw;
}

RealTensor RealFromRaw(const RawTensor& raw) {
  Require(raw.dtype == RawDtype::kF64, ErrorKind::kUnsupported, "raw tensor is not f64");
  std::vector<double> data(raw.payload.size() / sizeof(double));
  std::memcpy(data.data(), raw.payload.data(), raw.payload.size());
  return RealTensor(Shape(raw.dims), std::move(data));
}

std::vector<std::uint8_t> EncodeRawTensor(const RawTensor& t) {
  const std::size_t size = DtypeSize(static_cast<std::uint8_t>(t.dtype));
  Require(t.payload.size() == Numel(t.dims) * size, ErrorKind::kShape,
          "raw tensor payload does not match its dims");
  Writer w;
  w.Bytes(kTensorMagic, 4);
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(t.dtype));
  w.Put<std::uint32_t>(static_cast<std::uint32_t>(t.dims.size()));
  for (std::size_t d : t.dims) w.Put<std::uint32_t>(static_cast<std::uint32_t>(d));
  w.Bytes(t.payload.data(), t.payload.size());
  return std::move(w.out);
}

RawTensor DecodeRawTensor(const std::vector<std::uint8_t>& bytes) {
  Require(bytes.size() >= 12 && std::memcmp(bytes.data(), kTensorMagic, 4) == 0, ErrorKind::kFormat,
          "not a raw tensor file");
  Reader r(bytes.data(), bytes.size());
  r.Get<std::uint32_t>();
  RawTensor t;
  const auto dtype = r.Get<std::uint32_t>();
  Require(dtype <= 2, ErrorKind::kFormat, "unknown raw tensor dtype " + std::to_string(dtype));
  t.dtype = static_cast<RawDtype>(dtype);
  const auto rank = r.Get<std::uint32_t>();
  Require(rank >= 1 && rank <= 8, ErrorKind::kFormat, "bad raw tensor rank");
  t.dims = r.Dims(rank);
  const std::size_t n = Numel(t.dims) * DtypeSize(static_cast<std::uint8_t>(dtype));
  Require(r.remaining() == n, ErrorKind::kFormat,
          "raw tensor payload is " + std::to_string(r.remaining()) + " bytes, expected " + std::to_string(n));
  t.payload.resize(n);
  r.Bytes(t.payload.data(), n);
  return t;
}

void SaveRawTensor(const RawTensor& t, const fs::path& path) { WriteFileAtomic(path, EncodeRawTensor(t)); }
RawTensor LoadRawTensor(const fs::path& path) { return DecodeRawTensor(ReadFileBytes(path)); }

// ---- images ----

RealTensor DecodeNetpbm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') t += static_cast<char>(bytes[pos++]);
    Require(!t.empty(), ErrorKind::kFormat, "image header is truncated");
    return t;
  };
  auto number = [&]() {
    const std::string t = token();
    Require(t.size() <= 9 && std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; }),
            ErrorKind::kFormat, "bad image header field '" + t + "'");
    return static_cast<std::size_t>(std::stoul(t));
  };
  const std::string magic = token();
  Require(magic == "P5" || magic == "P6", ErrorKind::kFormat, "not a binary PGM/PPM image");
  const std::size_t c = magic == "P5" ? 1 : 3;
  const std::size_t w = number(), h = number(), maxval = number();
  Require(w > 0 && h > 0 && maxval > 0 && maxval <= 65535, ErrorKind::kFormat, "bad image header");
  Require(maxval <= 255, ErrorKind::kUnsupported,
          "image maxval " + std::to_string(maxval) + " is above 255");
  Require(pos < bytes.size() && std::isspace(bytes[pos]), ErrorKind::kFormat, "image header is truncated");
  ++pos;
  const std::size_t n = h * w * c;
  Require(bytes.size() - pos >= n, ErrorKind::kFormat, "image data is truncated");
  RealTensor out(Shape{h, w, c});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t v = bytes[pos + i];
    Require(v <= maxval, ErrorKind::kFormat, "pixel value above maxval");
    out[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return out;
}

std::vector<std::uint8_t> EncodeNetpbm(const RealTensor& image) {
  Require(image.rank() == 3 && (image.dim(2) == 1 || image.dim(2) == 3), ErrorKind::kShape,
          "images must be [h, w, 1] or [h, w, 3]");
  const std::string header = std::string(image.dim(2) == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(image.dim(1)) + " " + std::to_string(image.dim(0)) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double v : image.data()) {
    out.push_back(static_cast<std::uint8_t>(RoundHalfAwayFromZero(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  return out;
}

void SaveImage(const RealTensor& image, const fs::path& path) { WriteFileAtomic(path, EncodeNetpbm(image)); }

RealTensor LoadImage(const fs::path& path) {
  const auto bytes = ReadFileBytes(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kTensorMagic, 4) == 0) {
    RealTensor t = RealFromRaw(DecodeRawTensor(bytes));
    Require(t.rank() == 3, ErrorKind::kShape, "raw image tensors must be [h, w, c]");
    RequireFinite(t, path.string());
    return t;
  }
  return DecodeNetpbm(bytes);
}

// ---- text files ----

std::vector<std::string> LoadLines(const fs::path& path) {
  const auto bytes = ReadFileBytes(path);
  std::istringstream is(std::string(bytes.begin(), bytes.end()));
  std::vector<std::string> out;
  for (std::string line; std::getline(is, line);) {
    line = Trim(line);
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

void SaveLines(const std::vector<std::string>& lines, const fs::path& path) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  WriteFileAtomic(path, text);
}

Dataset LoadDataset(const fs::path& dir, std::size_t max_question_len) {
  Dataset ds;
  ds.vocab = LoadLines(dir / "vocab.txt");
  ds.answers = LoadLines(dir / "answers.txt");
  const Vocabulary vocab(ds.vocab, max_question_len);
  const auto lines = LoadLines(dir / "index.tsv");
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto f = SplitTabs(lines[i]);
    const std::string where = "index.tsv line " + std::to_string(i + 1);
    Require(f.size() == 3 || f.size() == 4, ErrorKind::kFormat, where + ": expected 3 or 4 tab-separated fields");
    Sample s;
    s.image = LoadImage(dir / f[0]);
    s.tokens = Tokenize(f[1], vocab);
    std::size_t label = 0;
    try {
      std::size_t used = 0;
      label = std::stoul(f[2], &used);
      Require(used == f[2].size(), ErrorKind::kFormat, where + ": bad answer id");
    } catch (const std::logic_error&) {
      Fail(ErrorKind::kFormat, where + ": bad answer id '" + f[2] + "'");
    }
    Require(label < ds.answers.size(), ErrorKind::kLabel, where + ": answer id out of range");
    s.label = label;
    if (f.size() == 4 && f[3] != "-") {
      const RealTensor m = LoadImage(dir / f[3]);
      Require(m.dim(2) == 1, ErrorKind::kShape, where + ": masks must be grayscale");
      s.mask.mask = m.Reshaped(Shape{m.dim(0), m.dim(1)});
    } else {
      s.mask.mask = RealTensor(Shape{s.image.dim(0), s.image.dim(1)});
    }
    ds.questions.push_back(f[1]);
    ds.samples.push_back(std::move(s));
  }
  Require(!ds.samples.empty(), ErrorKind::kFormat, "dataset index is empty");
  return ds;
}

void SaveDataset(const SyntheticDataset& data, const fs::path& dir) {
  fs::create_directories(dir / "images");
  std::string index;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const Sample& s = data.samples[i];
    const std::string stem = "images/" + std::to_string(i);
    SaveImage(s.image, dir / (stem + ".ppm"));
    const auto& m = s.mask.mask;
    SaveImage(m.Reshaped(Shape{m.dim(0), m.dim(1), 1}), dir / (stem + "_mask.pgm"));
    index += stem + ".ppm\t" + data.sample_questions.at(i) + "\t" + std::to_string(s.label) + "\t" + stem +
             "_mask.pgm\n";
  }
  SaveLines(data.vocab, dir / "vocab.txt");
  SaveLines(data.answers, dir / "answers.txt");
  WriteFileAtomic(dir / "index.tsv", index);
}

// ---- plumbing ----

std::vector<std::uint8_t> ReadFileBytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) Fail(ErrorKind::kIo, "cannot read '" + path.string() + "'");
  return bytes;
}

void WriteFileAtomic(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) Fail(ErrorKind::kIo, "cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) Fail(ErrorKind::kIo, "short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    Fail(ErrorKind::kIo, "cannot rename onto '" + path.string() + "'");
  }
}

void WriteFileAtomic(const fs::path& path, const std::string& text) {
  WriteFileAtomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace qvqa
