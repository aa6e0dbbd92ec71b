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

// Reference computations used by the tests. Each one recomputes a result
// from first principles (enumeration, direct model queries, plain graph
// search) without calling the library routine it checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <vector>

#include "hybridspec/analysis.h"
#include "hybridspec/drafttree.h"
#include "hybridspec/engine.h"
#include "hybridspec/hybrid.h"
#include "hybridspec/models.h"
#include "hybridspec/retrieval.h"

namespace hybridspec::oracle {

inline MarkovTableModel seed42(int32_t size = 16, int32_t order = 1, double sparsity = 0.0) {
  return build_markov(VocabSpec{size, {}}, order, 42, sparsity);
}

inline std::vector<TokenId> concat(std::span<const TokenId> a, std::span<const TokenId> b) {
  std::vector<TokenId> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// Row-wise mixture (1 - w) * a + w * b of two tables over the same contexts.
// With an unrelated `b` the draft argmax often differs from the target's.
inline MarkovTableModel blend(const MarkovTableModel& a, const MarkovTableModel& b, double w) {
  std::vector<Distribution> rows;
  for (size_t i = 0; i < a.rows().size(); ++i) {
    std::vector<double> r(static_cast<size_t>(a.vocab().size));
    for (TokenId t = 0; t < a.vocab().size; ++t) r[static_cast<size_t>(t)] = (1.0 - w) * a.rows()[i][t] + w * b.rows()[i][t];
    rows.emplace_back(std::move(r));
  }
  return MarkovTableModel(a.vocab(), a.order(), a.contexts(), std::move(rows), a.fallback(), a.seed());
}

// Lowest id among the maximal entries.
inline TokenId argmax(const Distribution& d) {
  TokenId best = 0;
  for (TokenId t = 0; t < d.size(); ++t) {
    if (d[t] > d[best]) best = t;
  }
  return best;
}

// Autoregressive greedy continuation by direct queries.
inline std::vector<TokenId> greedy_decode(const MarkovTableModel& target, std::vector<TokenId> seq, int32_t n) {
  std::vector<TokenId> out;
  for (int32_t i = 0; i < n; ++i) {
    const TokenId t = argmax(target.next_distribution(seq));
    out.push_back(t);
    seq.push_back(t);
  }
  return out;
}

// Log-probability of a path below the root under `model`, recomputed term by term.
inline double path_logprob(const MarkovTableModel& model, std::span<const TokenId> committed,
                           std::span<const TokenId> path) {
  std::vector<TokenId> seq(committed.begin(), committed.end());
  double s = 0.0;
  for (TokenId t : path) {
    s += std::log(model.next_distribution(seq)[t]);
    seq.push_back(t);
  }
  return s;
}

// Best-first growth from the root: repeatedly add the highest-score node
// whose parent is already selected (lowest index on ties).
inline std::vector<int32_t> closure_select(const DraftTree& tree, int32_t budget) {
  std::vector<std::vector<int32_t>> kids(tree.nodes.size());
  for (size_t i = 1; i < tree.nodes.size(); ++i) kids[static_cast<size_t>(tree.nodes[i].parent)].push_back(static_cast<int32_t>(i));
  auto worse = [&](int32_t a, int32_t b) {
    const double sa = tree.nodes[static_cast<size_t>(a)].score;
    const double sb = tree.nodes[static_cast<size_t>(b)].score;
    return sa != sb ? sa < sb : a > b;
  };
  std::priority_queue<int32_t, std::vector<int32_t>, decltype(worse)> frontier(worse);
  std::vector<int32_t> chosen{0};
  for (int32_t c : kids[0]) frontier.push(c);
  while (static_cast<int32_t>(chosen.size()) < budget && !frontier.empty()) {
    const int32_t n = frontier.top();
    frontier.pop();
    chosen.push_back(n);
    for (int32_t c : kids[static_cast<size_t>(n)]) frontier.push(c);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

// (j is i or an ancestor of i) via descendant search from every node.
inline std::vector<std::vector<bool>> reachability(const std::vector<int32_t>& parents) {
  const size_t n = parents.size();
  std::vector<std::vector<int32_t>> kids(n);
  for (size_t i = 0; i < n; ++i) {
    if (parents[i] >= 0) kids[static_cast<size_t>(parents[i])].push_back(static_cast<int32_t>(i));
  }
  std::vector<std::vector<bool>> m(n, std::vector<bool>(n, false));
  for (size_t j = 0; j < n; ++j) {
    std::vector<int32_t> stack{static_cast<int32_t>(j)};
    while (!stack.empty()) {
      const int32_t x = stack.back();
      stack.pop_back();
      m[static_cast<size_t>(x)][j] = true;
      for (int32_t c : kids[static_cast<size_t>(x)]) stack.push_back(c);
    }
  }
  return m;
}

// Depth of the deepest node whose path equals a prefix of `greedy`.
inline int32_t greedy_walk(const HybridTree& tree, const std::vector<TokenId>& greedy) {
  int32_t best = 0;
  for (int32_t i = 1; i < tree.size(); ++i) {
    const auto path = tree.path_tokens(i);
    if (path.size() <= greedy.size() && std::equal(path.begin(), path.end(), greedy.begin())) {
      best = std::max(best, static_cast<int32_t>(path.size()));
    }
  }
  return best;
}

// Number of template nodes whose whole rank path consists of valid entries.
inline int32_t template_walk(const TransitionMatrix& m, const StageTemplate& t, TokenId root) {
  int32_t realized = 0;
  for (size_t i = 0; i < t.nodes.size(); ++i) {
    std::vector<int32_t> ranks;
    for (int32_t x = static_cast<int32_t>(i); x != kRootParent; x = t.nodes[static_cast<size_t>(x)].parent) {
      ranks.push_back(t.nodes[static_cast<size_t>(x)].rank);
    }
    std::reverse(ranks.begin(), ranks.end());
    TokenId cur = root;
    bool ok = true;
    for (int32_t r : ranks) {
      const auto next = m.lookup(cur, r);
      if (!next) {
        ok = false;
        break;
      }
      cur = *next;
    }
    realized += ok ? 1 : 0;
  }
  return realized;
}

// Target mass of tokens in `retrieved` and not in `siblings`, by a scan of the row.
inline double coverage_row_sum(const Distribution& p, std::span<const TokenId> siblings,
                               std::span<const TokenId> retrieved) {
  double s = 0.0;
  for (TokenId v = 0; v < p.size(); ++v) {
    const bool in_r = std::find(retrieved.begin(), retrieved.end(), v) != retrieved.end();
    const bool in_s = std::find(siblings.begin(), siblings.end(), v) != siblings.end();
    if (in_r && !in_s) s += p[v];
  }
  return s;
}

// Exact law of the emitted sequence of point-mass residual verification,
// each outcome extended with target continuation draws up to `length`
// tokens. Enumerates every accept/reject branch.
class EmissionEnumerator {
 public:
  EmissionEnumerator(const MarkovTableModel& target, const std::vector<TokenId>& committed, const HybridTree& tree,
                     size_t length)
      : target_(target), committed_(committed), tree_(tree), kids_(tree.children()), length_(length) {}

  std::map<std::vector<TokenId>, double> run() {
    out_.clear();
    visit(0, {}, 1.0);
    return out_;
  }

 private:
  std::vector<double> row(const std::vector<TokenId>& emitted) const {
    const auto seq = concat(committed_, emitted);
    const Distribution& d = target_.next_distribution(seq);
    return std::vector<double>(d.probs().begin(), d.probs().end());
  }

  void extend(std::vector<TokenId> seq, double prob) {
    if (seq.size() >= length_) {
      seq.resize(length_);
      out_[seq] += prob;
      return;
    }
    const auto p = row(seq);
    for (TokenId v = 0; v < static_cast<TokenId>(p.size()); ++v) {
      if (p[static_cast<size_t>(v)] <= 0.0) continue;
      auto next = seq;
      next.push_back(v);
      extend(next, prob * p[static_cast<size_t>(v)]);
    }
  }

  void visit(int32_t node, const std::vector<TokenId>& emitted, double prob) {
    std::vector<double> res = row(emitted);
    std::vector<int32_t> kids = kids_[static_cast<size_t>(node)];
    std::sort(kids.begin(), kids.end(), [&](int32_t a, int32_t b) {
      return tree_.tokens[static_cast<size_t>(a)] < tree_.tokens[static_cast<size_t>(b)];
    });
    double reach = prob;
    for (int32_t c : kids) {
      const TokenId x = tree_.tokens[static_cast<size_t>(c)];
      const double a = res[static_cast<size_t>(x)];
      if (a > 0.0) {
        auto next = emitted;
        next.push_back(x);
        visit(c, next, reach * a);
      }
      reach *= 1.0 - a;
      if (reach <= 0.0) return;
      res[static_cast<size_t>(x)] = 0.0;
      double z = 0.0;
      for (double v : res) z += v;
      for (double& v : res) v /= z;
    }
    for (TokenId v = 0; v < static_cast<TokenId>(res.size()); ++v) {
      if (res[static_cast<size_t>(v)] <= 0.0) continue;
      auto next = emitted;
      next.push_back(v);
      extend(next, reach * res[static_cast<size_t>(v)]);
    }
  }

  const MarkovTableModel& target_;
  std::vector<TokenId> committed_;
  const HybridTree& tree_;
  std::vector<std::vector<int32_t>> kids_;
  size_t length_;
  std::map<std::vector<TokenId>, double> out_;
};

// Target probability of `seq` following `committed`.
inline double sequence_prob(const MarkovTableModel& target, const std::vector<TokenId>& committed,
                            const std::vector<TokenId>& seq) {
  auto ctx = committed;
  double p = 1.0;
  for (TokenId t : seq) {
    p *= target.next_distribution(ctx)[t];
    ctx.push_back(t);
  }
  return p;
}

// Every grid vector, maximized with ties to the lexicographically lowest.
inline CalibrationPoint exhaustive_calibration(const DecodeConfig& base, const MarkovTableModel& target,
                                               const MarkovTableModel& draft, const TransitionMatrix& matrix,
                                               std::span<const std::vector<TokenId>> prompts,
                                               const std::vector<std::vector<double>>& grid) {
  std::vector<size_t> idx(grid.size(), 0);
  CalibrationPoint best;
  bool have = false;
  while (true) {
    DecodeConfig c = base;
    c.prune.thresholds.clear();
    for (size_t i = 0; i < grid.size(); ++i) c.prune.thresholds.push_back(grid[i][idx[i]]);
    const double obj = calibration_objective(c, target, draft, matrix, prompts);
    if (!have || obj > best.objective) {
      best = CalibrationPoint{c.prune.thresholds, obj};
      have = true;
    }
    size_t pos = grid.size();
    while (pos > 0) {
      --pos;
      if (++idx[pos] < grid[pos].size()) break;
      idx[pos] = 0;
      if (pos == 0) return best;
    }
    if (grid.empty()) return best;
  }
}

}  // namespace hybridspec::oracle
