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

#ifndef QVQA_VOCAB_HPP_
#define QVQA_VOCAB_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace qvqa {

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::string_view kUnkToken = "<unk>";

// Token ids start at 1; id 0 is padding. Unknown words map to the id of an
// explicit "<unk>" entry, or to one past the last token when there is none.
class Vocabulary {
 public:
  Vocabulary(std::vector<std::string> tokens, std::size_t max_question_len);

  std::int32_t id(std::string_view token) const;
  std::int32_t unk_id() const noexcept { return unk_id_; }
  // Rows an embedding table needs to cover every id this vocabulary emits.
  std::size_t table_size() const noexcept;
  std::size_t max_question_len() const noexcept { return max_question_len_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> ids_;
  std::int32_t unk_id_ = 0;
  std::size_t max_question_len_ = 0;
};

// Lowercases, drops punctuation, splits on whitespace, maps to ids and
// right-pads with 0 (or truncates) to max_question_len.
std::vector<std::int32_t> Tokenize(std::string_view question, const Vocabulary& vocab);

}  // namespace qvqa

#endif  // QVQA_VOCAB_HPP_
