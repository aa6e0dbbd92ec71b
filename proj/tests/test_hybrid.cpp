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

#include <set>

#include "doctest.h"
#include "hybridspec/hybrid.h"
#include "oracles.h"

using namespace hybridspec;

namespace {

std::set<std::vector<TokenId>> draft_paths(const DraftTree& t, std::span<const int32_t> retained) {
  std::set<std::vector<TokenId>> out;
  for (int32_t i : retained) out.insert(t.path_tokens(i));
  return out;
}

std::set<std::vector<TokenId>> branch_paths(const RetrievedBranch& b) {
  std::set<std::vector<TokenId>> out{{}};
  for (size_t i = 0; i < b.nodes.size(); ++i) {
    std::vector<TokenId> p;
    for (int32_t x = static_cast<int32_t>(i); x != kRootParent; x = b.nodes[static_cast<size_t>(x)].parent) {
      p.insert(p.begin(), b.nodes[static_cast<size_t>(x)].token);
    }
    out.insert(p);
  }
  return out;
}

struct Fixture {
  MarkovTableModel target = oracle::seed42(16, 1, 0.3);
  MarkovTableModel draft = derive_draft(target, DraftDerivation{DerivationMode::kUniformMix, 0.5});
  TransitionMatrix full{16, 10};
  TemplateSet templates = builtin_templates(10);
  Fixture() {
    for (TokenId t = 0; t < 16; ++t) full.update_row(t, target.next_distribution(std::vector<TokenId>{t}));
  }
};

}  // namespace

TEST_CASE("merge") {
  Fixture f;
  PruneConfig cfg;
  const std::vector<TokenId> c{4};
  const DraftTree dense = build_full_tree(c, f.draft, cfg);
  const auto retained = select_top_closed(dense, 8);

  RetrievedBranch empty;
  empty.root_token = 4;
  const HybridTree plain = merge(dense, retained, empty, 60);
  CHECK(path_set(plain) == draft_paths(dense, retained));
  CHECK(plain.count(NodeOrigin::kRetrieved) == 0);

  // Stage d0 with a matrix whose rows never overlap the draft children.
  TransitionMatrix shifted(16, 10);
  for (TokenId t = 0; t < 16; ++t) {
    std::vector<double> w(16, 0.0);
    for (int i = 0; i < 10; ++i) w[static_cast<size_t>((t + 1 + i) % 16)] = 10.0 - i;
    shifted.update_row(t, Distribution::normalized(w));
  }
  const RetrievedBranch b0 = instantiate(f.full, f.templates.at("d0"), 4);
  const HybridTree m0 = merge(dense, retained, b0, 60);
  CHECK(m0.size() <= 60);
  CHECK_NOTHROW(m0.validate());
  // Path-set union oracle (budget not binding once duplicates fold).
  auto want = draft_paths(dense, retained);
  for (const auto& p : branch_paths(b0)) want.insert(p);
  if (static_cast<int32_t>(want.size()) <= 60) CHECK(path_set(m0) == want);

  const PruneDecision d0 = [&] {
    PruneConfig p;
    p.thresholds = {0.99, 0.13, 0.51};
    return resolve_stage(c, p, f.target);
  }();
  REQUIRE(d0.stage == 0);
  const RetrievedBranch bd = instantiate(f.full, f.templates.at("d0"), 4);
  const HybridTree md = merge(d0, bd, 60);
  CHECK(md.size() <= 60);
  CHECK(md.count(NodeOrigin::kDraft) == static_cast<int32_t>(d0.retained.size()));

  // Duplicate (root, token) folds into the draft node.
  const TokenId first = dense.nodes[static_cast<size_t>(retained[1])].token;
  RetrievedBranch dup;
  dup.root_token = 4;
  dup.nodes.push_back(RetrievedNode{first, kRootParent, 1, 0, 0});
  dup.nodes.push_back(RetrievedNode{15, 0, 2, 0, 1});
  const HybridTree folded = merge(dense, retained, dup, 60);
  auto want2 = draft_paths(dense, retained);
  want2.insert({first});
  want2.insert({first, 15});
  CHECK(path_set(folded) == want2);
  for (int32_t i = 1; i < folded.size(); ++i) {
    if (folded.path_tokens(i) == std::vector<TokenId>{first}) CHECK(folded.origin[static_cast<size_t>(i)] == NodeOrigin::kDraft);
  }

  RetrievedBranch wrong;
  wrong.root_token = 5;
  CHECK_THROWS_AS(merge(dense, retained, wrong, 60), StructuralError);

  // Stage d0 with a non-overlapping full matrix fills the budget exactly.
  const RetrievedBranch bs = instantiate(shifted, f.templates.at("d0"), 4);
  CHECK(bs.realized_count() == 52);
  std::vector<int32_t> eight = select_top_closed(dense, 8);
  const HybridTree ms = merge(dense, eight, bs, 60);
  const int32_t overlap = static_cast<int32_t>(draft_paths(dense, eight).size() + branch_paths(bs).size() - 1) -
                          static_cast<int32_t>(path_set(ms).size());
  CHECK(ms.size() == 60 - overlap);
}

TEST_CASE("flatten") {
  HybridTree chain;
  chain.tokens = {0, 1, 2, 3};
  chain.parents = {kRootParent, 0, 1, 2};
  chain.depths = {0, 1, 2, 3};
  chain.origin.assign(4, NodeOrigin::kDraft);
  chain.scores = {0, -1, -2, -3};
  chain.budget = 60;
  const VerificationPackage p = flatten(chain, 7);
  for (int32_t i = 0; i < 4; ++i) {
    for (int32_t j = 0; j < 4; ++j) CHECK(p.attends(i, j) == (j <= i));
    CHECK(p.position_ids[static_cast<size_t>(i)] == 7 + i);
  }
  CHECK(p.paths.size() == 1);

  HybridTree fork;
  fork.tokens = {0, 1, 2};
  fork.parents = {kRootParent, 0, 0};
  fork.depths = {0, 1, 1};
  fork.origin.assign(3, NodeOrigin::kDraft);
  fork.scores = {0, -1, -1};
  fork.budget = 60;
  const VerificationPackage q = flatten(fork, 0);
  CHECK_FALSE(q.attends(1, 2));
  CHECK_FALSE(q.attends(2, 1));
  CHECK(q.paths.size() == 2);

  Fixture f;
  PruneConfig cfg;
  for (TokenId root = 0; root < 16; ++root) {
    const std::vector<TokenId> c{root};
    const DraftTree dense = build_full_tree(c, f.draft, cfg);
    const auto keep = select_top_closed(dense, 40);
    const HybridTree h = merge(dense, keep, instantiate(f.full, f.templates.at("d5"), root), 60);
    const VerificationPackage v = flatten(h, 11);
    const auto reach = oracle::reachability(v.parents);
    for (int32_t i = 0; i < v.size(); ++i) {
      for (int32_t j = 0; j < v.size(); ++j) CHECK(v.attends(i, j) == reach[static_cast<size_t>(i)][static_cast<size_t>(j)]);
      CHECK(v.position_ids[static_cast<size_t>(i)] == 11 + v.depths[static_cast<size_t>(i)]);
    }
  }
}

TEST_CASE("root and tail insertion variants") {
  Fixture f;
  PruneConfig cfg;
  const std::vector<TokenId> c{9};
  const DraftTree dense = build_full_tree(c, f.draft, cfg);
  RetrievedBranch empty;
  empty.root_token = 9;
  const HybridTree r0 = insert_root_variant(dense, empty, 60);
  CHECK(path_set(r0) == draft_paths(dense, select_top_closed(dense, 60)));

  const RetrievedBranch b = instantiate(f.full, f.templates.at("d5"), 9);
  REQUIRE(b.realized_count() == 20);
  const HybridTree r = insert_root_variant(dense, b, 60);
  const auto kept = oracle::closure_select(dense, 40);
  std::set<std::vector<TokenId>> drafted;
  for (int32_t i = 0; i < r.size(); ++i) {
    if (r.origin[static_cast<size_t>(i)] == NodeOrigin::kDraft) drafted.insert(r.path_tokens(i));
  }
  CHECK(drafted == draft_paths(dense, kept));
  CHECK(r.size() <= 60);

  const std::vector<TokenId> chain{1, 2, 3};
  const HybridTree t = insert_tail_variant(dense, chain, 3, 60);
  CHECK(t.count(NodeOrigin::kDraft) == 57);
  CHECK(t.count(NodeOrigin::kRetrieved) == 3);
  const HybridTree tm = insert_tail_variant(dense, f.full, 8, 60);
  CHECK(tm.size() == 60);
  CHECK(tm.count(NodeOrigin::kRetrieved) == 8);
}

TEST_CASE("canonical form, validation, subtree relation") {
  HybridTree t;
  t.tokens = {0, 3, 1, 2};
  t.parents = {kRootParent, 0, 0, 1};
  t.depths = {0, 1, 1, 2};
  t.origin.assign(4, NodeOrigin::kDraft);
  t.scores = {0, -1, -2, -3};
  t.budget = 60;
  const HybridTree c = canonicalize(t);
  CHECK(c.tokens == std::vector<TokenId>{0, 1, 3, 2});
  CHECK(c.parents == std::vector<int32_t>{kRootParent, 0, 0, 2});
  CHECK(path_set(c) == path_set(t));
  CHECK(is_subtree(c, t));

  HybridTree small = t;
  small.tokens.pop_back();
  small.parents.pop_back();
  small.depths.pop_back();
  small.origin.pop_back();
  small.scores.pop_back();
  CHECK(is_subtree(small, t));
  CHECK_FALSE(is_subtree(t, small));

  HybridTree bad = t;
  bad.parents[3] = 3;
  CHECK_THROWS_AS(bad.validate(), StructuralError);
  HybridTree dup = t;
  dup.tokens[2] = 3;
  CHECK_THROWS_AS(dup.validate(), StructuralError);
  HybridTree over = t;
  over.budget = 3;
  CHECK_THROWS_AS(over.validate(), StructuralError);
  CHECK(render(c).find("retrieved") == std::string::npos);
}
