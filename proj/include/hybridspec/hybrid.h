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

// Hybrid candidate trees: retained draft nodes plus grafted retrieval nodes
// under one budget, and their flattened verification form.

#pragma once

#include <cstdint>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "hybridspec/common.h"
#include "hybridspec/drafttree.h"
#include "hybridspec/models.h"
#include "hybridspec/retrieval.h"

namespace hybridspec {

enum class NodeOrigin : uint8_t { kDraft, kRetrieved };

std::string to_string(NodeOrigin origin);

inline constexpr double kNoScore = -std::numeric_limits<double>::infinity();

// Breadth-first with siblings in ascending token order once canonicalized.
// The root is node 0 and is tagged kDraft.
struct HybridTree {
  std::vector<TokenId> tokens;
  std::vector<int32_t> parents;
  std::vector<NodeOrigin> origin;
  std::vector<int32_t> depths;
  std::vector<double> scores;  // draft cumulative score; kNoScore for retrieved
  int32_t budget = 0;

  int32_t size() const { return static_cast<int32_t>(tokens.size()); }
  TokenId root_token() const { return tokens.front(); }
  int32_t count(NodeOrigin o) const;
  // Throws StructuralError when any tree invariant is broken.
  void validate() const;
  std::vector<std::vector<int32_t>> children() const;
  // Tokens strictly below the root on the way to `node`.
  std::vector<TokenId> path_tokens(int32_t node) const;
};

// Reorders into breadth-first order with siblings sorted by token id.
HybridTree canonicalize(const HybridTree& tree);

// The retained nodes of a draft tree as a hybrid tree.
HybridTree from_draft(const DraftTree& tree, std::span<const int32_t> retained, int32_t budget);

// Grafts `branch` at the root of the retained draft subtree. A retrieved node
// whose (parent, token) already exists is folded into the existing node, so
// its retrieved descendants hang off the survivor. Retrieved nodes beyond the
// budget are dropped in breadth-first order together with their subtrees.
HybridTree merge(const DraftTree& tree, std::span<const int32_t> retained,
                 const RetrievedBranch& branch, int32_t budget);
HybridTree merge(const PruneDecision& decision, const RetrievedBranch& branch, int32_t budget);

// ROOT insertion: evicts the lowest-score dense nodes (closure respecting)
// until the branch fits, then grafts it at the root.
HybridTree insert_root_variant(const DraftTree& dense, const RetrievedBranch& branch, int32_t budget);

// Attachment leaf for TAIL insertion: deepest retained node, highest score
// on ties, lowest index after that.
int32_t tail_attach_point(const DraftTree& dense, std::span<const int32_t> retained);

// TAIL insertion: keeps the best budget - chain_length dense nodes and hangs
// the rank-0 chain retrieved from the attachment leaf below it.
HybridTree insert_tail_variant(const DraftTree& dense, const TransitionMatrix& matrix,
                               int32_t chain_length, int32_t budget);
// Same with an explicit chain.
HybridTree insert_tail_variant(const DraftTree& dense, std::span<const TokenId> chain,
                               int32_t chain_length, int32_t budget);

struct VerificationPackage {
  std::vector<TokenId> tokens;
  std::vector<int32_t> parents;
  std::vector<int32_t> depths;
  // Row-major n x n; (i, j) set iff j is i or an ancestor of i.
  std::vector<uint8_t> ancestor_mask;
  std::vector<int32_t> position_ids;
  // Root-to-leaf node index sequences, in ascending leaf order.
  std::vector<std::vector<int32_t>> paths;

  int32_t size() const { return static_cast<int32_t>(tokens.size()); }
  bool attends(int32_t i, int32_t j) const {
    return ancestor_mask[static_cast<size_t>(i) * tokens.size() + static_cast<size_t>(j)] != 0;
  }
};

// `prefix_len` is the committed length before the root, so the root sits at
// position prefix_len.
VerificationPackage flatten(const HybridTree& tree, int32_t prefix_len);

// Every root-to-node token path (the root's is empty).
std::set<std::vector<TokenId>> path_set(const HybridTree& tree);
// Path-set containment.
bool is_subtree(const HybridTree& inner, const HybridTree& outer);

// One node per line: index, parent, depth, glyph, origin.
std::string render(const HybridTree& tree, const VocabSpec* vocab = nullptr);

}  // namespace hybridspec
