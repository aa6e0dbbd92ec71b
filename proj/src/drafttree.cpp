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

#include "hybridspec/drafttree.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace hybridspec {

DraftTree DraftTree::with_root(TokenId root) {
  DraftTree tree;
  tree.root_token = root;
  tree.nodes.push_back(DraftNode{root, kRootParent, 0, 0.0, 0.0});
  tree.layer_offsets = {0, 1};
  return tree;
}

std::span<const DraftNode> DraftTree::layer(int32_t depth) const {
  if (depth < 0 || depth >= num_layers()) throw StructuralError("draft layer " + std::to_string(depth) + " does not exist");
  const size_t begin = layer_offsets[static_cast<size_t>(depth)];
  const size_t end = layer_offsets[static_cast<size_t>(depth) + 1];
  return std::span<const DraftNode>(nodes).subspan(begin, end - begin);
}

std::vector<TokenId> DraftTree::path_tokens(int32_t node) const {
  std::vector<TokenId> path;
  for (int32_t cur = node; cur > 0; cur = nodes[static_cast<size_t>(cur)].parent) {
    path.push_back(nodes[static_cast<size_t>(cur)].token);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

DraftTree expand_layer(const DraftTree& tree, const MarkovTableModel& draft,
                       std::span<const TokenId> committed, int32_t top_k, int32_t beam_width) {
  if (top_k < 1) throw ConfigError("top_k must be at least 1");
  if (beam_width < 1) throw ConfigError("beam width must be at least 1");
  if (tree.nodes.empty() || tree.num_layers() < 1) throw StructuralError("draft tree has no root");
  const int32_t frontier_depth = tree.num_layers() - 1;
  const auto frontier = tree.layer(frontier_depth);
  if (frontier.empty()) throw StructuralError("draft frontier is empty");

  const size_t frontier_begin = tree.layer_offsets[static_cast<size_t>(frontier_depth)];
  const auto window = static_cast<size_t>(draft.order());
  std::vector<DraftNode> candidates;
  for (size_t i = 0; i < frontier.size(); ++i) {
    const auto parent = static_cast<int32_t>(frontier_begin + i);
    const DraftNode& p = frontier[i];
    const auto path = tree.path_tokens(parent);
    const auto ctx = context_window(committed, path, window);
    const Distribution& q = draft.next_distribution(ctx);
    for (TokenId tok : q.top_k(top_k, /*skip_zero=*/true)) {
      const double logq = std::log(q[tok]);
      candidates.push_back(DraftNode{tok, parent, p.depth + 1, logq, p.score + logq});
    }
  }

  // Beam over the new layer; survivors keep their generation order so the
  // layer stays grouped by parent.
  std::vector<size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), size_t{0});
  const size_t keep = std::min(order.size(), static_cast<size_t>(beam_width));
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return candidates[a].score > candidates[b].score;
  });
  order.resize(keep);
  std::sort(order.begin(), order.end());

  DraftTree out = tree;
  for (size_t idx : order) out.nodes.push_back(candidates[idx]);
  out.layer_offsets.push_back(out.nodes.size());
  return out;
}

double layer_confidence(const DraftTree& tree, int32_t depth) {
  const auto nodes = tree.layer(depth);
  if (nodes.empty()) throw StructuralError("draft layer " + std::to_string(depth) + " is empty");
  double best = -std::numeric_limits<double>::infinity();
  for (const DraftNode& n : nodes) best = std::max(best, n.score);
  return std::exp(best);
}

void PruneConfig::validate() const {
  if (total_budget < 1) throw ConfigError("total budget must be positive");
  if (top_k < 1) throw ConfigError("top_k must be positive");
  if (beam_width < 1) throw ConfigError("beam width must be positive");
  if (max_depth < 1) throw ConfigError("max depth must be positive");
  if (thresholds.size() != checkpoints.size() || stage_budgets.size() != checkpoints.size()) {
    throw ConfigError("checkpoints, thresholds and stage budgets must have equal length");
  }
  for (size_t i = 0; i < checkpoints.size(); ++i) {
    if (checkpoints[i] < 0 || checkpoints[i] > max_depth) throw ConfigError("checkpoint outside [0, max_depth]");
    if (i > 0 && checkpoints[i] <= checkpoints[i - 1]) throw ConfigError("checkpoints must be strictly ascending");
    if (!(thresholds[i] > 0.0 && thresholds[i] < 1.0)) throw ConfigError("thresholds must lie in (0, 1)");
    const StageBudget& b = stage_budgets[i];
    if (b.draft < 1 || b.retrieval < 0 || b.draft + b.retrieval != total_budget) {
      throw ConfigError("stage budgets must satisfy K_draft + K_ret = K_max with K_draft >= 1");
    }
  }
}

std::string stage_label(int32_t stage) {
  return stage == kNoStage ? std::string("none") : "d" + std::to_string(stage);
}

std::vector<int32_t> select_top_closed(const DraftTree& tree, int32_t budget) {
  if (tree.nodes.empty()) throw StructuralError("draft tree has no root");
  std::vector<int32_t> order(tree.nodes.size() - 1);
  std::iota(order.begin(), order.end(), 1);
  std::stable_sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
    return tree.nodes[static_cast<size_t>(a)].score > tree.nodes[static_cast<size_t>(b)].score;
  });
  std::vector<char> kept(tree.nodes.size(), 0);
  kept[0] = 1;
  std::vector<int32_t> out{0};
  if (budget < 1) throw ConfigError("retention budget must be at least 1");
  for (int32_t idx : order) {
    if (static_cast<int32_t>(out.size()) >= budget) break;
    const auto& n = tree.nodes[static_cast<size_t>(idx)];
    if (!kept[static_cast<size_t>(n.parent)]) continue;
    kept[static_cast<size_t>(idx)] = 1;
    out.push_back(idx);
  }
  std::sort(out.begin(), out.end());
  return out;
}

DraftTree build_full_tree(std::span<const TokenId> committed, const MarkovTableModel& draft,
                          const PruneConfig& config) {
  if (committed.empty()) throw InputError("committed sequence must contain the root token");
  DraftTree tree = DraftTree::with_root(committed.back());
  for (int32_t d = 0; d < config.max_depth; ++d) {
    if (tree.layer(tree.num_layers() - 1).empty()) break;
    tree = expand_layer(tree, draft, committed, config.top_k, config.beam_width);
  }
  return tree;
}

PruneDecision resolve_stage(std::span<const TokenId> committed, const PruneConfig& config,
                            const MarkovTableModel& draft) {
  return resolve_stage(committed, config, draft, [](size_t, double c, double t) { return evaluate_gate(c, t); });
}

PruneDecision resolve_stage(std::span<const TokenId> committed, const PruneConfig& config,
                            const MarkovTableModel& draft, const GateFn& gate) {
  config.validate();
  if (committed.empty()) throw InputError("committed sequence must contain the root token");
  PruneDecision decision;
  decision.tree = DraftTree::with_root(committed.back());
  DraftTree& tree = decision.tree;

  for (int32_t d = 0; d < config.max_depth; ++d) {
    if (tree.layer(tree.num_layers() - 1).empty()) break;
    tree = expand_layer(tree, draft, committed, config.top_k, config.beam_width);
    decision.layers_expanded = d + 1;
    if (tree.layer(d + 1).empty()) break;
    // Checkpoint d gates on the layer just drafted (depth d + 1).
    auto it = std::find(config.checkpoints.begin(), config.checkpoints.end(), d);
    if (it == config.checkpoints.end()) continue;
    const auto ci = static_cast<size_t>(it - config.checkpoints.begin());
    const double c = layer_confidence(tree, d + 1);
    const bool pass = gate(ci, c, config.thresholds[ci]);
    decision.confidence_trace.push_back(CheckpointConfidence{d, d + 1, c, pass});
    if (!pass) {
      decision.stage = d;
      decision.stage_index = static_cast<int32_t>(ci);
      break;
    }
  }

  if (decision.pruned()) {
    const StageBudget& b = config.stage_budgets[static_cast<size_t>(decision.stage_index)];
    decision.draft_budget = b.draft;
    decision.retrieval_budget = b.retrieval;
  } else {
    decision.draft_budget = config.total_budget;
    decision.retrieval_budget = 0;
  }
  decision.retained = select_top_closed(tree, decision.draft_budget);
  return decision;
}

}  // namespace hybridspec
