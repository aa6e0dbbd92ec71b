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

// Retrieval memory: a vocab x k table of top successor tokens, refreshed by
// argtop-k of verified target distributions, plus the static rank-path
// templates that decide which successors are materialized per pruning stage.

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hybridspec/common.h"
#include "hybridspec/models.h"

namespace hybridspec {

class TransitionMatrix {
 public:
  TransitionMatrix(int32_t vocab_size, int32_t k);

  int32_t vocab_size() const { return vocab_size_; }
  int32_t k() const { return k_; }

  // Stored successor, or nullopt for a cold entry. O(1).
  std::optional<TokenId> lookup(TokenId token, int32_t rank) const;
  int32_t valid_count(TokenId token) const;

  // Replaces the row of `token` wholesale with argtop-k of `dist`
  // (descending probability, ascending id on ties).
  void update_row(TokenId token, const Distribution& dist);
  // update_row for every pair in order; later pairs for a token win.
  void update_from_verification(std::span<const NodeDistribution> nodes);

  size_t touched_rows() const;
  // Dense capacity: vocab * k ids of 4 bytes plus the validity bitmap.
  size_t storage_bytes() const;
  // Footprint counting only rows that hold at least one valid entry.
  size_t touched_bytes() const;

  void save(const std::string& path) const;
  static TransitionMatrix load(const std::string& path);

  bool operator==(const TransitionMatrix&) const = default;

 private:
  size_t slot(TokenId token, int32_t rank) const {
    return static_cast<size_t>(token) * static_cast<size_t>(k_) + static_cast<size_t>(rank);
  }

  int32_t vocab_size_ = 0;
  int32_t k_ = 0;
  std::vector<TokenId> ids_;
  std::vector<uint8_t> valid_;
};

struct TemplateNode {
  int32_t parent = kRootParent;  // template index, or kRootParent
  int32_t rank = 0;              // successor rank in the parent's row
  int32_t depth = 1;
};

struct StageTemplate {
  std::string stage;             // "d0", "d1", "d5", "full", ...
  std::vector<TemplateNode> nodes;  // breadth-first
  int32_t declared_size = 0;

  std::vector<int32_t> depth_counts() const;
  int32_t max_rank() const;
  int32_t max_depth() const;
  // Rank path from the root to node `index`.
  std::vector<int32_t> rank_path(int32_t index) const;
  // Checks template structure and that every rank fits in k.
  void validate(int32_t k) const;
};

using TemplateSet = std::map<std::string, StageTemplate>;

// Builds a template with the given per-depth node counts. Each depth takes
// the best (parent, rank) candidates ordered by rank-path sum, then by the
// lexicographic rank path, so low-rank lineages receive the most children
// and the all-zero chain is always present at every depth.
StageTemplate generate_template(const std::string& stage, const std::vector<int32_t>& depth_counts,
                                int32_t k);

// Per-depth counts of the shipped templates.
const std::map<std::string, std::vector<int32_t>>& builtin_depth_counts();
// The d0, d1, d5 and full templates. ConfigError if k is too small.
TemplateSet builtin_templates(int32_t k);

// The `size` highest-priority nodes of `source` as a standalone template.
StageTemplate template_prefix(const StageTemplate& source, int32_t size, const std::string& stage);

// Redistributes `size` nodes over at most `max_depth` depths with at most
// `max_width` nodes per depth, following the shape of `base_counts`.
StageTemplate reshaped_template(const std::string& stage, const std::vector<int32_t>& base_counts,
                                int32_t size, int32_t max_depth, int32_t max_width, int32_t k);

TemplateSet load_templates(const std::string& path, int32_t k);
void save_templates(const TemplateSet& set, const std::string& path);

struct RetrievedNode {
  TokenId token = 0;
  int32_t parent = kRootParent;  // branch index, or kRootParent
  int32_t depth = 1;
  int32_t rank = 0;
  int32_t template_index = 0;
};

struct RetrievedBranch {
  TokenId root_token = 0;
  std::vector<RetrievedNode> nodes;  // realized nodes only, breadth-first
  int32_t declared_size = 0;

  int32_t realized_count() const { return static_cast<int32_t>(nodes.size()); }
};

// Breadth-first fill of `tmpl` from `root`. A node is realized iff its parent
// is and the parent's row is valid at the node's rank.
RetrievedBranch instantiate(const TransitionMatrix& matrix, const StageTemplate& tmpl, TokenId root);

// Rank-0 successors starting after `start`, stopping at the first cold row.
std::vector<TokenId> retrieve_chain(const TransitionMatrix& matrix, TokenId start, int32_t length);

struct WarmupRound {
  int32_t round = 0;
  size_t prompt_index = 0;
  int32_t steps = 0;
  size_t rows_touched = 0;
  // Checkpoint confidences observed at each step of the round.
  std::vector<std::vector<double>> confidence_traces;
};

struct WarmupTranscript {
  std::vector<WarmupRound> rounds;
};

// Runs one full decode session with updates enabled against `matrix` and
// fills in steps and confidence traces.
using WarmupSession = std::function<WarmupRound(TransitionMatrix& matrix, std::span<const TokenId> prompt)>;

// Round r decodes prompts[r % prompts.size()]; generated text is discarded.
WarmupTranscript warmup(TransitionMatrix& matrix, const WarmupSession& run_session,
                        std::span<const std::vector<TokenId>> prompts, int32_t rounds);

}  // namespace hybridspec
