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

#include "hybridspec/corpus.h"

#include <cctype>
#include <climits>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace hybridspec {

namespace {

template <typename Fn>
void for_each_word(std::string_view text, Fn&& fn) {
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) fn(text.substr(start, i - start));
  }
}

}  // namespace

VocabSpec byte_vocab() {
  VocabSpec vocab{256, {}};
  vocab.glyphs.reserve(256);
  for (int b = 0; b < 256; ++b) {
    if (b >= 0x21 && b < 0x7f) {
      vocab.glyphs.emplace_back(1, static_cast<char>(b));
    } else {
      char buf[8];
      std::snprintf(buf, sizeof(buf), "\\x%02x", b);
      vocab.glyphs.emplace_back(buf);
    }
  }
  return vocab;
}

std::vector<TokenId> tokenize_bytes(std::string_view text) {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(static_cast<TokenId>(static_cast<unsigned char>(c)));
  return ids;
}

WhitespaceVocab build_whitespace_vocab(std::string_view text) {
  std::set<std::string, std::less<>> words;
  for_each_word(text, [&](std::string_view w) { words.emplace(w); });
  WhitespaceVocab out;
  for (const auto& w : words) {
    out.ids.emplace(w, static_cast<TokenId>(out.vocab.glyphs.size()));
    out.vocab.glyphs.push_back(w);
  }
  out.vocab.size = static_cast<int32_t>(out.vocab.glyphs.size());
  return out;
}

std::vector<TokenId> tokenize_whitespace(std::string_view text, const WhitespaceVocab& vocab) {
  std::vector<TokenId> ids;
  for_each_word(text, [&](std::string_view w) {
    auto it = vocab.ids.find(w);
    if (it == vocab.ids.end()) throw InputError("word not in vocabulary: " + std::string(w));
    ids.push_back(it->second);
  });
  return ids;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<TokenId> read_token_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open token file: " + path);
  std::vector<TokenId> ids;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    size_t b = line.find_last_not_of(" \t\r");
    const std::string field = line.substr(a, b - a + 1);
    size_t used = 0;
    long long v = -1;
    try {
      v = std::stoll(field, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != field.size() || v < 0 || v > INT32_MAX) {
      throw InputError(path + ":" + std::to_string(line_no) + ": expected a non-negative token id");
    }
    ids.push_back(static_cast<TokenId>(v));
  }
  return ids;
}

}  // namespace hybridspec
