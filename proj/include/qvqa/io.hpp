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

#ifndef QVQA_IO_HPP_
#define QVQA_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qvqa/distill.hpp"
#include "qvqa/model.hpp"
#include "qvqa/vocab.hpp"

// Model file layout, little-endian throughout:
//
//   "TVQM" | u32 version (1) | u8 role (0 teacher, 1 student)
//   u8 precision (0 float64, 1 full-integer)
//   u32 n | n bytes of compact GraphSpec JSON
//   u32 tensor count, then per tensor:
//     u16 name length | name | u8 dtype (0 f64, 1 i8, 2 i32) | u8 rank | u32 dims
//     i8: f64 scale, i32 zero point; i32: f64 scale
//     payload, row-major
//   full-integer only: u32 count, then per activation:
//     u16 name length | name | f64 scale | i32 zero point
//   u32 CRC-32 of every preceding byte
namespace qvqa {

namespace fs = std::filesystem;

enum class ModelPrecision { kFloat, kInt8 };

std::vector<std::uint8_t> EncodeModel(const Model& model);
std::vector<std::uint8_t> EncodeModel(const QuantModel& model);

// Decoding checks, in order: magic and size (kFormat), version
// (kUnsupportedVersion), record structure (kFormat when truncated), checksum
// (kCorruptFile), then that the tensors match the GraphSpec exactly.
ModelPrecision PeekPrecision(const std::vector<std::uint8_t>& bytes);
Model DecodeModel(const std::vector<std::uint8_t>& bytes);
QuantModel DecodeQuantModel(const std::vector<std::uint8_t>& bytes);

void SaveModel(const Model& model, const fs::path& path);
void SaveModel(const QuantModel& model, const fs::path& path);
ModelPrecision PeekModelPrecision(const fs::path& path);
Model LoadModel(const fs::path& path);
QuantModel LoadQuantModel(const fs::path& path);

// ---- raw tensors: "TVQT" | u32 dtype | u32 rank | u32 dims | payload ----

enum class RawDtype : std::uint32_t { kF64 = 0, kI8 = 1, kI32 = 2 };

struct RawTensor {
  RawDtype dtype = RawDtype::kF64;
  std::vector<std::size_t> dims;
  std::vector<std::uint8_t> payload;

  bool operator==(const RawTensor&) const = default;
};

RawTensor ToRaw(const RealTensor& t);
RealTensor RealFromRaw(const RawTensor& raw);  // kUnsupported unless f64
std::vector<std::uint8_t> EncodeRawTensor(const RawTensor& t);
RawTensor DecodeRawTensor(const std::vector<std::uint8_t>& bytes);
void SaveRawTensor(const RawTensor& t, const fs::path& path);
RawTensor LoadRawTensor(const fs::path& path);

// ---- images ----

// Binary PGM (P5), PPM (P6) or a rank-3 f64 raw tensor, as [h, w, c] in
// [0, 1]. maxval above 255 is kUnsupported.
RealTensor LoadImage(const fs::path& path);
RealTensor DecodeNetpbm(const std::vector<std::uint8_t>& bytes);
// c = 1 writes P5, c = 3 writes P6; values are clamped to [0, 1].
std::vector<std::uint8_t> EncodeNetpbm(const RealTensor& image);
void SaveImage(const RealTensor& image, const fs::path& path);

// ---- text files ----

// One token per line, blank lines ignored.
std::vector<std::string> LoadLines(const fs::path& path);
void SaveLines(const std::vector<std::string>& lines, const fs::path& path);

// Dataset directory: vocab.txt, answers.txt and index.tsv with one sample
// per line: image path, question, answer id, mask path or "-". Paths are
// relative to the directory.
struct Dataset {
  std::vector<std::string> vocab;
  std::vector<std::string> answers;
  std::vector<std::string> questions;
  std::vector<Sample> samples;
};

Dataset LoadDataset(const fs::path& dir, std::size_t max_question_len);
void SaveDataset(const SyntheticDataset& data, const fs::path& dir);

// ---- plumbing ----

std::vector<std::uint8_t> ReadFileBytes(const fs::path& path);
// Writes a sibling temporary file, then renames it over `path`.
void WriteFileAtomic(const fs::path& path, const std::vector<std::uint8_t>& bytes);
void WriteFileAtomic(const fs::path& path, const std::string& text);

}  // namespace qvqa

#endif  // QVQA_IO_HPP_
