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

// Layered parametric draft tree with cumulative path scores and the
// checkpoint confidence gates that decide how much of the fixed candidate
// budget the drafter keeps.
//
// Conventions:
//  - `committed` is the full committed token sequence; its last token is the
//    tree root. A node's draft distribution is queried on committed ++ the
//    node's root-to-node path (root excluded, since it is already committed).
//  - Checkpoint d is evaluated once layer d + 1 has been drafted and gates on
//    c_{d+1}; checkpoint 0 is therefore the root draft step.
//  - Budgets count the root as one of the nodes.

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hybridspec/common.h"
#include "hybridspec/models.h"

namespace hybridspec {

struct DraftNode {
  TokenId token = 0;
  int32_t parent = kRootParent;
  int32_t depth = 0;
  double logq = 0.0;   // log q(token | path to parent)
  double score = 0.0;  // score(parent) + logq; 0 at the root
};

struct DraftTree {
  // Breadth-first; within a layer, nodes are grouped by parent.
  std::vector<DraftNode> nodes;
  // Layer d spans [layer_offsets[d], layer_offsets[d + 1]).
  std::vector<size_t> layer_offsets;
  TokenId root_token = 0;

  static DraftTree with_root(TokenId root);

  // Number of layers including the root layer.
  int32_t num_layers() const { return static_cast<int32_t>(layer_offsets.size()) - 1; }
  std::span<const DraftNode> layer(int32_t depth) const;
  // Tokens strictly below the root on the way to `node`.
  std::vector<TokenId> path_tokens(int32_t node) const;
};

// Drafts one more layer: top_k children (zero-mass tokens skipped) per
// frontier node, then keeps the beam_width best by cumulative score.
// Throws StructuralError when the current frontier is empty.
DraftTree expand_layer(const DraftTree& tree, const MarkovTableModel& draft,
                       std::span<const TokenId> committed, int32_t top_k, int32_t beam_width);

// exp(max score over the nodes at `depth`). StructuralError for a missing
// or empty layer.
double layer_confidence(const DraftTree& tree, int32_t depth);

inline bool evaluate_gate(double confidence, double threshold) { return confidence > threshold; }

struct StageBudget {
  int32_t draft = 0;
  int32_t retrieval = 0;
  bool operator==(const StageBudget&) const = default;
};

struct PruneConfig {
  std::vector<int32_t> checkpoints{0, 1, 5};
  std::vector<double> thresholds{0.15, 0.13, 0.51};
  std::vector<StageBudget> stage_budgets{{8, 52}, {24, 36}, {40, 20}};
  int32_t total_budget = 60;
  int32_t top_k = 10;
  int32_t max_depth = 8;
  int32_t beam_width = 10;

  void validate() const;
};

inline constexpr int32_t kNoStage = -1;

std::string stage_label(int32_t stage);

struct CheckpointConfidence {
  int32_t checkpoint = 0;
  int32_t layer = 0;  // the layer whose confidence was gated
  double confidence = 0.0;
  bool passed = false;
};

struct PruneDecision {
  int32_t stage = kNoStage;        // checkpoint depth, or kNoStage
  int32_t stage_index = -1;        // index into PruneConfig::checkpoints
  std::vector<CheckpointConfidence> confidence_trace;
  std::vector<int32_t> retained;   // ascending node indices; root first
  DraftTree tree;                  // the expanded (unpruned) tree
  int32_t layers_expanded = 0;     // drafted layers below the root
  int32_t draft_budget = 0;
  int32_t retrieval_budget = 0;

  bool pruned() const { return stage != kNoStage; }
};

// The `budget` best nodes by cumulative score, ties by index, taken greedily
// so that a node is kept only when its parent is. The root is always kept
// and counts toward the budget. Result is sorted ascending.
std::vector<int32_t> select_top_closed(const DraftTree& tree, int32_t budget);

// Expands up to max_depth layers with no gating.
DraftTree build_full_tree(std::span<const TokenId> committed, const MarkovTableModel& draft,
                          const PruneConfig& config);

// Layer-by-layer expansion with checkpoint gating. The first failing gate
// stops drafting and resolves the stage; with no failure the full tree is
// drafted and the global top total_budget nodes are kept.
PruneDecision resolve_stage(std::span<const TokenId> committed, const PruneConfig& config,
                            const MarkovTableModel& draft);

// Gate override: returns whether checkpoint `index` passes. Used to inject
// synthetic gate errors; the default is evaluate_gate.
using GateFn = std::function<bool(size_t index, double confidence, double threshold)>;
PruneDecision resolve_stage(std::span<const TokenId> committed, const PruneConfig& config,
                            const MarkovTableModel& draft, const GateFn& gate);

}  // namespace hybridspec
