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

#include "qvqa/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "qvqa/error.hpp"

namespace qvqa {

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::size_t max_question_len)
    : tokens_(std::move(tokens)), max_question_len_(max_question_len) {
  Require(max_question_len_ >= 1, ErrorKind::kConfig, "max_question_len must be positive");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    Require(!tokens_[i].empty(), ErrorKind::kFormat,
            "vocabulary line " + std::to_string(i + 1) + " is empty");
    const auto [it, inserted] = ids_.emplace(tokens_[i], static_cast<std::int32_t>(i + 1));
    Require(inserted, ErrorKind::kFormat, "duplicate vocabulary token '" + tokens_[i] + "'");
  }
  const auto unk = ids_.find(std::string(kUnkToken));
  unk_id_ = unk != ids_.end() ? unk->second : static_cast<std::int32_t>(tokens_.size() + 1);
}

std::int32_t Vocabulary::id(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  return it == ids_.end() ? unk_id_ : it->second;
}

std::size_t Vocabulary::table_size() const noexcept {
  return std::max<std::size_t>(tokens_.size(), static_cast<std::size_t>(unk_id_)) + 1;
}

std::vector<std::int32_t> Tokenize(std::string_view question, const Vocabulary& vocab) {
  std::string normalized;
  normalized.reserve(question.size());
  for (unsigned char ch : question) {
    if (std::isalnum(ch)) {
      normalized.push_back(static_cast<char>(std::tolower(ch)));
    } else if (std::isspace(ch)) {
      normalized.push_back(' ');
    }
  }
  std::vector<std::int32_t> ids;
  std::istringstream words(normalized);
  for (std::string w; words >> w;) ids.push_back(vocab.id(w));
  Require(!ids.empty(), ErrorKind::kEmptyQuestion, "question has no words after normalization");
  ids.resize(vocab.max_question_len(), kPadId);
  return ids;
}

}  // namespace qvqa
