/* Copyright 2026 The hybridspec Authors. All Rights Reserved.

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

#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "hybridspec/common.h"
#include "hybridspec/models.h"

namespace hybridspec {

// Byte-level tokenizer: one id per byte, vocabulary of 256.
VocabSpec byte_vocab();
std::vector<TokenId> tokenize_bytes(std::string_view text);

// Whitespace tokenizer with a vocabulary built from the text itself. Ids are
// assigned in ascending byte order of the distinct words.
struct WhitespaceVocab {
  VocabSpec vocab;
  std::map<std::string, TokenId, std::less<>> ids;
};

WhitespaceVocab build_whitespace_vocab(std::string_view text);
std::vector<TokenId> tokenize_whitespace(std::string_view text, const WhitespaceVocab& vocab);

std::string read_text_file(const std::string& path);
// One non-negative integer per line; blank lines are skipped.
std::vector<TokenId> read_token_file(const std::string& path);

}  // namespace hybridspec
