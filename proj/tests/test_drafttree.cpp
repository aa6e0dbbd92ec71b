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

#include <algorithm>
#include <cmath>
#include <tuple>

#include "doctest.h"
#include "hybridspec/drafttree.h"
#include "oracles.h"

using namespace hybridspec;

TEST_CASE("expand_layer on fixed models") {
  const auto det = det_cycle_model(4);
  const std::vector<TokenId> committed{0};
  const auto t = expand_layer(DraftTree::with_root(0), det, committed, 1, 10);
  REQUIRE(t.layer(1).size() == 1);
  CHECK(t.layer(1)[0].token == 1);
  CHECK(t.layer(1)[0].logq == 0.0);
  CHECK(t.layer(1)[0].score == 0.0);

  const auto uni = uniform_model(4);
  const auto u = expand_layer(DraftTree::with_root(0), uni, committed, 2, 10);
  REQUIRE(u.layer(1).size() == 2);
  CHECK(u.layer(1)[0].token == 0);
  CHECK(u.layer(1)[1].token == 1);
  CHECK(u.layer(1)[0].logq == doctest::Approx(std::log(0.25)));
}

TEST_CASE("expand_layer beam matches candidate enumeration") {
  const auto m = oracle::seed42();
  for (TokenId root = 0; root < 16; ++root) {
    const std::vector<TokenId> committed{5, root};
    auto t = expand_layer(DraftTree::with_root(root), m, committed, 3, 6);
    t = expand_layer(t, m, committed, 3, 6);
    // Score every (depth-1 node, top-3 child) pair directly.
    std::vector<std::tuple<double, TokenId, TokenId>> cand;
    for (const DraftNode& p : t.layer(1)) {
      const auto& row = m.next_distribution(std::vector<TokenId>{p.token});
      std::vector<TokenId> ids(16);
      for (TokenId i = 0; i < 16; ++i) ids[static_cast<size_t>(i)] = i;
      std::stable_sort(ids.begin(), ids.end(), [&](TokenId a, TokenId b) { return row[a] > row[b]; });
      for (int i = 0; i < 3; ++i) {
        const TokenId c = ids[static_cast<size_t>(i)];
        cand.emplace_back(oracle::path_logprob(m, committed, std::vector<TokenId>{p.token, c}), p.token, c);
      }
    }
    std::stable_sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) { return std::get<0>(a) > std::get<0>(b); });
    cand.resize(6);
    std::vector<std::pair<TokenId, TokenId>> want, got;
    for (const auto& [s, p, c] : cand) want.emplace_back(p, c);
    for (const DraftNode& n : t.layer(2)) {
      got.emplace_back(t.nodes[static_cast<size_t>(n.parent)].token, n.token);
      CHECK(n.score == doctest::Approx(oracle::path_logprob(m, committed, t.path_tokens(
                                           static_cast<int32_t>(&n - t.nodes.data())))).epsilon(1e-12));
    }
    std::sort(want.begin(), want.end());
    std::sort(got.begin(), got.end());
    CHECK(got == want);
  }
}

TEST_CASE("layer_confidence") {
  PruneConfig cfg;
  const auto det = det_cycle_model(4);
  const std::vector<TokenId> c{0};
  const auto t = build_full_tree(c, det, cfg);
  for (int32_t d = 1; d < t.num_layers(); ++d) CHECK(layer_confidence(t, d) == 1.0);

  cfg.max_depth = 3;
  const auto u = build_full_tree(c, uniform_model(4), cfg);
  CHECK(layer_confidence(u, 3) == doctest::Approx(0.015625).epsilon(1e-12));

  // Full top-k and beam at V = 16 make the depth-2 layer exhaustive.
  const auto m = oracle::seed42();
  cfg.max_depth = 2;
  cfg.top_k = 16;
  cfg.beam_width = 256;
  const std::vector<TokenId> committed{3};
  const auto full = build_full_tree(committed, m, cfg);
  double best = -1e300;
  for (TokenId a = 0; a < 16; ++a) {
    for (TokenId b = 0; b < 16; ++b) best = std::max(best, oracle::path_logprob(m, committed, std::vector<TokenId>{a, b}));
  }
  CHECK(layer_confidence(full, 2) == doctest::Approx(std::exp(best)).epsilon(1e-12));
  CHECK_THROWS_AS(layer_confidence(full, 5), StructuralError);
}

TEST_CASE("evaluate_gate is strict") {
  CHECK(evaluate_gate(0.25, 0.14));
  CHECK_FALSE(evaluate_gate(0.50, 0.51));
  CHECK_FALSE(evaluate_gate(0.3, 0.3));
}

TEST_CASE("resolve_stage on fixed models") {
  const std::vector<TokenId> c{0};
  PruneConfig cfg;
  const auto det = resolve_stage(c, cfg, det_cycle_model(4));
  CHECK(det.stage == kNoStage);
  CHECK(det.retained.size() == 9);  // root plus the 8-layer chain
  CHECK(det.draft_budget == 60);

  cfg.thresholds = {0.3, 0.3, 0.51};
  const auto uni = resolve_stage(c, cfg, uniform_model(4));
  CHECK(uni.stage == 0);
  REQUIRE(uni.confidence_trace.size() == 1);
  CHECK(uni.confidence_trace[0].layer == 1);
  CHECK(uni.confidence_trace[0].confidence == doctest::Approx(0.25));
  CHECK(uni.draft_budget == 8);
  CHECK(uni.retrieval_budget == 52);
  // Only the root and its four children exist after the root draft step.
  CHECK(uni.retained.size() == 5);
  CHECK(uni.layers_expanded == 1);
}

TEST_CASE("select_top_closed matches best-first closure growth") {
  const auto m = oracle::seed42(16, 1, 0.3);
  const auto draft = derive_draft(m, DraftDerivation{DerivationMode::kUniformMix, 0.5});
  PruneConfig cfg;
  for (TokenId root = 0; root < 16; ++root) {
    const std::vector<TokenId> c{root};
    const auto tree = build_full_tree(c, draft, cfg);
    for (int32_t budget : {1, 8, 24, 40, 60}) {
      CHECK(select_top_closed(tree, budget) == oracle::closure_select(tree, budget));
    }
  }
}

TEST_CASE("stage budgets validate") {
  PruneConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  for (size_t i = 0; i < cfg.stage_budgets.size(); ++i) {
    CHECK(cfg.stage_budgets[i].draft + cfg.stage_budgets[i].retrieval == cfg.total_budget);
  }
  CHECK(cfg.stage_budgets[0] == StageBudget{8, 52});
  CHECK(cfg.stage_budgets[1] == StageBudget{24, 36});
  CHECK(cfg.stage_budgets[2] == StageBudget{40, 20});
  cfg.stage_budgets[1] = StageBudget{24, 30};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  PruneConfig bad;
  bad.thresholds = {0.1, 0.2};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
