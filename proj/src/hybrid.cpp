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

#include "hybridspec/hybrid.h"

#include <algorithm>
#include <deque>
#include <map>
#include <sstream>
#include <utility>

namespace hybridspec {

std::string to_string(NodeOrigin origin) {
  return origin == NodeOrigin::kDraft ? "draft" : "retrieved";
}

int32_t HybridTree::count(NodeOrigin o) const {
  return static_cast<int32_t>(std::count(origin.begin(), origin.end(), o));
}

void HybridTree::validate() const {
  const size_t n = tokens.size();
  if (n == 0) throw StructuralError("hybrid tree has no root");
  if (parents.size() != n || origin.size() != n || depths.size() != n || scores.size() != n) {
    throw StructuralError("hybrid tree field lengths differ");
  }
  if (static_cast<int32_t>(n) > budget) throw StructuralError("hybrid tree exceeds its budget");
  if (parents[0] != kRootParent || depths[0] != 0) throw StructuralError("node 0 must be the root");
  std::set<std::pair<int32_t, TokenId>> seen;
  for (size_t i = 1; i < n; ++i) {
    const int32_t p = parents[i];
    if (p < 0 || static_cast<size_t>(p) >= i) throw StructuralError("parent must precede child");
    if (depths[i] != depths[static_cast<size_t>(p)] + 1) throw StructuralError("depth must be parent depth + 1");
    if (!seen.emplace(p, tokens[i]).second) throw StructuralError("siblings share a token id");
  }
}

std::vector<std::vector<int32_t>> HybridTree::children() const {
  std::vector<std::vector<int32_t>> out(tokens.size());
  for (size_t i = 1; i < tokens.size(); ++i) out[static_cast<size_t>(parents[i])].push_back(static_cast<int32_t>(i));
  return out;
}

std::vector<TokenId> HybridTree::path_tokens(int32_t node) const {
  std::vector<TokenId> path;
  for (int32_t cur = node; cur > 0; cur = parents[static_cast<size_t>(cur)]) path.push_back(tokens[static_cast<size_t>(cur)]);
  std::reverse(path.begin(), path.end());
  return path;
}

HybridTree canonicalize(const HybridTree& tree) {
  tree.validate();
  auto kids = tree.children();
  for (auto& c : kids) {
    std::sort(c.begin(), c.end(), [&](int32_t a, int32_t b) {
      return tree.tokens[static_cast<size_t>(a)] < tree.tokens[static_cast<size_t>(b)];
    });
  }
  HybridTree out;
  out.budget = tree.budget;
  std::vector<int32_t> remap(tree.tokens.size(), -1);
  std::deque<int32_t> queue{0};
  while (!queue.empty()) {
    const int32_t cur = queue.front();
    queue.pop_front();
    const auto c = static_cast<size_t>(cur);
    remap[c] = out.size();
    out.tokens.push_back(tree.tokens[c]);
    out.parents.push_back(cur == 0 ? kRootParent : remap[static_cast<size_t>(tree.parents[c])]);
    out.origin.push_back(tree.origin[c]);
    out.depths.push_back(tree.depths[c]);
    out.scores.push_back(tree.scores[c]);
    for (int32_t k : kids[c]) queue.push_back(k);
  }
  return out;
}

HybridTree from_draft(const DraftTree& tree, std::span<const int32_t> retained, int32_t budget) {
  if (retained.empty() || retained.front() != 0) throw StructuralError("retained set must start with the root");
  HybridTree out;
  out.budget = budget;
  std::vector<int32_t> remap(tree.nodes.size(), -1);
  for (int32_t idx : retained) {
    const DraftNode& n = tree.nodes[static_cast<size_t>(idx)];
    int32_t parent = kRootParent;
    if (idx != 0) {
      parent = remap[static_cast<size_t>(n.parent)];
      if (parent < 0) throw StructuralError("retained set is not parent-closed");
    }
    remap[static_cast<size_t>(idx)] = out.size();
    out.tokens.push_back(n.token);
    out.parents.push_back(parent);
    out.origin.push_back(NodeOrigin::kDraft);
    out.depths.push_back(n.depth);
    out.scores.push_back(n.score);
  }
  return canonicalize(out);
}

namespace {

void graft(HybridTree& tree, const RetrievedBranch& branch) {
  std::map<std::pair<int32_t, TokenId>, int32_t> child_index;
  for (int32_t i = 1; i < tree.size(); ++i) child_index[{tree.parents[static_cast<size_t>(i)], tree.tokens[static_cast<size_t>(i)]}] = i;
  std::vector<int32_t> placed(branch.nodes.size(), -1);
  for (size_t i = 0; i < branch.nodes.size(); ++i) {
    const RetrievedNode& rn = branch.nodes[i];
    const int32_t parent = rn.parent == kRootParent ? 0 : placed[static_cast<size_t>(rn.parent)];
    if (parent < 0) continue;  // ancestor was dropped for budget
    const auto key = std::make_pair(parent, rn.token);
    if (auto it = child_index.find(key); it != child_index.end()) {
      placed[i] = it->second;
      continue;
    }
    if (tree.size() >= tree.budget) continue;
    placed[i] = tree.size();
    child_index[key] = tree.size();
    tree.tokens.push_back(rn.token);
    tree.parents.push_back(parent);
    tree.origin.push_back(NodeOrigin::kRetrieved);
    tree.depths.push_back(tree.depths[static_cast<size_t>(parent)] + 1);
    tree.scores.push_back(kNoScore);
  }
}

}  // namespace

HybridTree merge(const DraftTree& tree, std::span<const int32_t> retained,
                 const RetrievedBranch& branch, int32_t budget) {
  if (branch.root_token != tree.root_token) throw StructuralError("retrieved branch and draft tree roots differ");
  if (static_cast<int32_t>(retained.size()) > budget) throw StructuralError("retained draft nodes exceed the budget");
  HybridTree out = from_draft(tree, retained, budget);
  graft(out, branch);
  return canonicalize(out);
}

HybridTree merge(const PruneDecision& decision, const RetrievedBranch& branch, int32_t budget) {
  return merge(decision.tree, decision.retained, branch, budget);
}

HybridTree insert_root_variant(const DraftTree& dense, const RetrievedBranch& branch, int32_t budget) {
  const int32_t keep = std::max(1, budget - branch.realized_count());
  const auto retained = select_top_closed(dense, keep);
  return merge(dense, retained, branch, budget);
}

int32_t tail_attach_point(const DraftTree& dense, std::span<const int32_t> retained) {
  int32_t best = retained.front();
  for (int32_t idx : retained) {
    const DraftNode& n = dense.nodes[static_cast<size_t>(idx)];
    const DraftNode& b = dense.nodes[static_cast<size_t>(best)];
    if (n.depth > b.depth || (n.depth == b.depth && n.score > b.score)) best = idx;
  }
  return best;
}

namespace {

HybridTree attach_chain(const DraftTree& dense, std::span<const int32_t> retained, int32_t leaf,
                        std::span<const TokenId> chain, int32_t budget) {
  HybridTree out = from_draft(dense, retained, budget);
  // Locate the leaf in canonical order by its token path.
  const auto target = dense.path_tokens(leaf);
  int32_t at = 0;
  for (int32_t i = 0; i < out.size(); ++i) {
    if (out.depths[static_cast<size_t>(i)] == dense.nodes[static_cast<size_t>(leaf)].depth && out.path_tokens(i) == target) {
      at = i;
      break;
    }
  }
  for (TokenId tok : chain) {
    if (out.size() >= budget) break;
    out.tokens.push_back(tok);
    out.parents.push_back(at);
    out.origin.push_back(NodeOrigin::kRetrieved);
    out.depths.push_back(out.depths[static_cast<size_t>(at)] + 1);
    out.scores.push_back(kNoScore);
    at = out.size() - 1;
  }
  return canonicalize(out);
}

}  // namespace

HybridTree insert_tail_variant(const DraftTree& dense, const TransitionMatrix& matrix,
                               int32_t chain_length, int32_t budget) {
  if (chain_length < 0) throw ConfigError("tail chain length must be non-negative");
  const int32_t keep = std::max(1, budget - chain_length);
  const auto retained = select_top_closed(dense, keep);
  const int32_t leaf = tail_attach_point(dense, retained);
  const auto chain = retrieve_chain(matrix, dense.nodes[static_cast<size_t>(leaf)].token, chain_length);
  return attach_chain(dense, retained, leaf, chain, budget);
}

HybridTree insert_tail_variant(const DraftTree& dense, std::span<const TokenId> chain,
                               int32_t chain_length, int32_t budget) {
  if (chain_length < 0) throw ConfigError("tail chain length must be non-negative");
  const int32_t keep = std::max(1, budget - chain_length);
  const auto retained = select_top_closed(dense, keep);
  const int32_t leaf = tail_attach_point(dense, retained);
  return attach_chain(dense, retained, leaf, chain.first(std::min(chain.size(), static_cast<size_t>(chain_length))),
                      budget);
}

VerificationPackage flatten(const HybridTree& input, int32_t prefix_len) {
  const HybridTree tree = canonicalize(input);
  const auto n = static_cast<size_t>(tree.size());
  VerificationPackage pkg;
  pkg.tokens = tree.tokens;
  pkg.parents = tree.parents;
  pkg.depths = tree.depths;
  pkg.ancestor_mask.assign(n * n, 0);
  pkg.position_ids.resize(n);
  for (size_t i = 0; i < n; ++i) {
    pkg.position_ids[i] = prefix_len + tree.depths[i];
    for (int32_t j = static_cast<int32_t>(i); j != kRootParent; j = tree.parents[static_cast<size_t>(j)]) {
      pkg.ancestor_mask[i * n + static_cast<size_t>(j)] = 1;
    }
  }
  std::vector<char> has_child(n, 0);
  for (size_t i = 1; i < n; ++i) has_child[static_cast<size_t>(tree.parents[i])] = 1;
  for (size_t i = 0; i < n; ++i) {
    if (has_child[i]) continue;
    std::vector<int32_t> path;
    for (int32_t j = static_cast<int32_t>(i); j != kRootParent; j = tree.parents[static_cast<size_t>(j)]) path.push_back(j);
    std::reverse(path.begin(), path.end());
    pkg.paths.push_back(std::move(path));
  }
  return pkg;
}

std::set<std::vector<TokenId>> path_set(const HybridTree& tree) {
  std::set<std::vector<TokenId>> out;
  for (int32_t i = 0; i < tree.size(); ++i) out.insert(tree.path_tokens(i));
  return out;
}

bool is_subtree(const HybridTree& inner, const HybridTree& outer) {
  if (inner.root_token() != outer.root_token()) return false;
  const auto a = path_set(inner);
  const auto b = path_set(outer);
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

std::string render(const HybridTree& tree, const VocabSpec* vocab) {
  std::ostringstream os;
  for (int32_t i = 0; i < tree.size(); ++i) {
    const auto s = static_cast<size_t>(i);
    const std::string glyph = vocab ? vocab->glyph(tree.tokens[s]) : std::to_string(tree.tokens[s]);
    os << i << '\t' << tree.parents[s] << '\t' << tree.depths[s] << '\t' << glyph << '\t' << to_string(tree.origin[s])
       << '\n';
  }
  return os.str();
}

}  // namespace hybridspec
