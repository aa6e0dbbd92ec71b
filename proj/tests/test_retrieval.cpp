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
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hybridspec/engine.h"
#include "hybridspec/retrieval.h"
#include "oracles.h"

using namespace hybridspec;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("hybridspec_test_" + name)).string();
}

void put_u32(std::ofstream& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}

// Snapshot with hand-set ids and validity, written byte by byte.
void write_snapshot(const std::string& path, uint32_t vocab, uint32_t k, const std::vector<int32_t>& ids,
                    const std::vector<bool>& valid) {
  std::ofstream out(path, std::ios::binary);
  out.write("HSTM", 4);
  put_u32(out, 1);
  put_u32(out, vocab);
  put_u32(out, k);
  for (int32_t id : ids) put_u32(out, static_cast<uint32_t>(id));
  std::vector<unsigned char> bits((valid.size() + 7) / 8, 0);
  for (size_t i = 0; i < valid.size(); ++i) {
    if (valid[i]) bits[i / 8] |= static_cast<unsigned char>(1u << (i % 8));
  }
  out.write(reinterpret_cast<const char*>(bits.data()), static_cast<std::streamsize>(bits.size()));
}

TransitionMatrix full_matrix(const MarkovTableModel& m, int32_t k) {
  TransitionMatrix mat(m.vocab().size, k);
  for (TokenId t = 0; t < m.vocab().size; ++t) mat.update_row(t, m.next_distribution(std::vector<TokenId>{t}));
  return mat;
}

}  // namespace

TEST_CASE("update_row and lookup") {
  TransitionMatrix m(8, 2);
  for (TokenId t = 0; t < 8; ++t) CHECK_FALSE(m.lookup(t, 0).has_value());
  m.update_row(5, Distribution(std::vector<double>{0.1, 0.6, 0.3, 0.0, 0, 0, 0, 0}));
  CHECK(m.lookup(5, 0) == 1);
  CHECK(m.lookup(5, 1) == 2);
  m.update_row(3, Distribution::uniform(8));
  CHECK(m.lookup(3, 0) == 0);
  CHECK(m.lookup(3, 1) == 1);
  CHECK_THROWS_AS(m.update_row(9, Distribution::uniform(8)), InputError);

  const auto model = oracle::seed42();
  TransitionMatrix k3(16, 3);
  const auto& row = model.next_distribution(std::vector<TokenId>{2});
  k3.update_row(2, row);
  std::vector<TokenId> ids(16);
  for (TokenId i = 0; i < 16; ++i) ids[static_cast<size_t>(i)] = i;
  std::sort(ids.begin(), ids.end(), [&](TokenId a, TokenId b) { return row[a] != row[b] ? row[a] > row[b] : a < b; });
  for (int32_t r = 0; r < 3; ++r) CHECK(k3.lookup(2, r) == ids[static_cast<size_t>(r)]);
}

TEST_CASE("update_from_verification is last writer wins") {
  TransitionMatrix m(4, 2);
  const TransitionMatrix before = m;
  m.update_from_verification({});
  CHECK(m == before);
  const Distribution a(std::vector<double>{0.7, 0.2, 0.1, 0.0});
  const Distribution b(std::vector<double>{0.0, 0.1, 0.2, 0.7});
  const std::vector<NodeDistribution> nodes{{1, &a}, {1, &b}};
  m.update_from_verification(nodes);
  TransitionMatrix only_b(4, 2);
  only_b.update_row(1, b);
  CHECK(m == only_b);

  const auto det = det_cycle_model(4);
  TransitionMatrix d(4, 2);
  std::vector<NodeDistribution> tree;
  for (TokenId t : {0, 1, 2, 1, 3}) tree.push_back({t, &det.next_distribution(std::vector<TokenId>{t})});
  d.update_from_verification(tree);
  for (TokenId t = 0; t < 4; ++t) CHECK(d.lookup(t, 0) == (t + 1) % 4);
}

TEST_CASE("storage accounting") {
  CHECK(TransitionMatrix(1000, 10).storage_bytes() == 40000 + 1250);
  CHECK(TransitionMatrix(1000, 0).storage_bytes() == 0);
  CHECK(TransitionMatrix(151936, 10).storage_bytes() == 151936 * 40 + 189920);
  TransitionMatrix m(16, 4);
  CHECK(m.touched_rows() == 0);
  m.update_row(3, Distribution::uniform(16));
  CHECK(m.touched_rows() == 1);
  CHECK(m.touched_bytes() > 0);
  CHECK(m.touched_bytes() < m.storage_bytes());
}

TEST_CASE("snapshot round trip and rejection") {
  const auto model = oracle::seed42();
  const TransitionMatrix m = full_matrix(model, 10);
  const std::string path = temp_path("snapshot.bin");
  m.save(path);
  CHECK(TransitionMatrix::load(path) == m);

  // The all-valid dump is byte-identical to a hand-written one.
  std::vector<int32_t> ids;
  std::vector<bool> valid;
  for (TokenId t = 0; t < 16; ++t) {
    for (int32_t r = 0; r < 10; ++r) {
      ids.push_back(*m.lookup(t, r));
      valid.push_back(true);
    }
  }
  const std::string hand = temp_path("hand.bin");
  write_snapshot(hand, 16, 10, ids, valid);
  std::ifstream a(path, std::ios::binary), b(hand, std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);

  std::vector<bool> gap = valid;
  gap[3] = false;
  write_snapshot(hand, 16, 10, ids, gap);
  CHECK_THROWS_AS(TransitionMatrix::load(hand), InputError);
  std::vector<int32_t> dup = ids;
  dup[1] = dup[0];
  write_snapshot(hand, 16, 10, dup, valid);
  CHECK_THROWS_AS(TransitionMatrix::load(hand), InputError);
  std::vector<int32_t> range = ids;
  range[0] = 99;
  write_snapshot(hand, 16, 10, range, valid);
  CHECK_THROWS_AS(TransitionMatrix::load(hand), InputError);
  {
    std::ofstream out(hand, std::ios::binary);
    out << "HSTX";
  }
  CHECK_THROWS_AS(TransitionMatrix::load(hand), InputError);
  std::filesystem::remove(path);
  std::filesystem::remove(hand);
}

TEST_CASE("builtin template table") {
  const TemplateSet set = builtin_templates(10);
  const std::map<std::string, std::vector<int32_t>> table{
      {"d0", {8, 10, 8, 6, 5, 4, 4, 4, 3}},
      {"d1", {6, 7, 5, 4, 4, 3, 3, 2, 2}},
      {"d5", {4, 3, 3, 2, 2, 2, 2, 1, 1}},
      {"full", {8, 16, 14, 11, 8, 7, 6, 5, 5}}};
  const std::map<std::string, size_t> sizes{{"d0", 52}, {"d1", 36}, {"d5", 20}, {"full", 80}};
  REQUIRE(set.size() == 4);
  for (const auto& [stage, counts] : table) {
    const StageTemplate& t = set.at(stage);
    CHECK(t.depth_counts() == counts);
    CHECK(t.nodes.size() == sizes.at(stage));
    CHECK(t.declared_size == static_cast<int32_t>(sizes.at(stage)));
    CHECK(t.max_depth() == 9);
    CHECK_NOTHROW(t.validate(10));
    // Parents precede children and rank paths are distinct.
    std::set<std::vector<int32_t>> paths;
    for (size_t i = 0; i < t.nodes.size(); ++i) {
      CHECK(t.nodes[i].parent < static_cast<int32_t>(i));
      CHECK(paths.insert(t.rank_path(static_cast<int32_t>(i))).second);
    }
  }
  CHECK_THROWS_AS(builtin_templates(2), ConfigError);
}

TEST_CASE("template prefix, reshape and file round trip") {
  const TemplateSet set = builtin_templates(10);
  const StageTemplate p = template_prefix(set.at("full"), 30, "p30");
  CHECK(p.nodes.size() == 30);
  CHECK_NOTHROW(p.validate(10));
  const StageTemplate r = reshaped_template("r", {8, 10, 8, 6, 5, 4, 4, 4, 3}, 40, 4, 12, 10);
  CHECK(r.nodes.size() == 40);
  CHECK(r.max_depth() <= 4);
  for (int32_t c : r.depth_counts()) CHECK(c <= 12);
  const StageTemplate narrow = reshaped_template("n", {8, 10, 8, 6, 5, 4, 4, 4, 3}, 18, 9, 2, 10);
  CHECK(narrow.nodes.size() == 18);
  for (int32_t c : narrow.depth_counts()) CHECK(c <= 2);

  const std::string path = temp_path("templates.json");
  save_templates(set, path);
  const TemplateSet back = load_templates(path, 10);
  for (const auto& [stage, t] : set) {
    REQUIRE(back.count(stage) == 1);
    CHECK(back.at(stage).depth_counts() == t.depth_counts());
    for (size_t i = 0; i < t.nodes.size(); ++i) {
      CHECK(back.at(stage).nodes[i].parent == t.nodes[i].parent);
      CHECK(back.at(stage).nodes[i].rank == t.nodes[i].rank);
    }
  }
  {
    std::ofstream out(path);
    out << R"({"templates":[{"stage":"x","declared_size":1,"nodes":[{"parent":3,"rank":0}]}]})";
  }
  CHECK_THROWS_AS(load_templates(path, 10), ConfigError);
  std::filesystem::remove(path);
}

TEST_CASE("instantiate") {
  const TemplateSet set = builtin_templates(10);
  const auto model = oracle::seed42();
  const TransitionMatrix full = full_matrix(model, 10);
  CHECK(instantiate(full, set.at("d5"), 3).realized_count() == 20);
  CHECK(instantiate(TransitionMatrix(16, 10), set.at("d5"), 3).realized_count() == 0);

  // Only rank 0 valid in every row.
  std::vector<int32_t> ids;
  std::vector<bool> valid;
  for (TokenId t = 0; t < 16; ++t) {
    for (int32_t r = 0; r < 10; ++r) {
      ids.push_back(r == 0 ? (t + 1) % 16 : 0);
      valid.push_back(r == 0);
    }
  }
  const std::string path = temp_path("rank0.bin");
  write_snapshot(path, 16, 10, ids, valid);
  const TransitionMatrix rank0 = TransitionMatrix::load(path);
  std::filesystem::remove(path);
  for (const auto& [stage, t] : set) {
    const RetrievedBranch b = instantiate(rank0, t, 4);
    CHECK(b.realized_count() == oracle::template_walk(rank0, t, 4));
    CHECK(b.realized_count() == 9);  // the all-zero chain
  }

  // Partially populated matrix against the walk oracle.
  TransitionMatrix partial(16, 10);
  for (TokenId t = 0; t < 16; t += 3) partial.update_row(t, model.next_distribution(std::vector<TokenId>{t}));
  for (const auto& [stage, t] : set) {
    for (TokenId root = 0; root < 16; ++root) {
      const RetrievedBranch b = instantiate(partial, t, root);
      CHECK(b.realized_count() == oracle::template_walk(partial, t, root));
      for (const RetrievedNode& n : b.nodes) {
        const TokenId parent_tok = n.parent == kRootParent ? root : b.nodes[static_cast<size_t>(n.parent)].token;
        CHECK(partial.lookup(parent_tok, n.rank) == n.token);
      }
    }
  }
}

TEST_CASE("retrieve_chain") {
  const TransitionMatrix m = full_matrix(det_cycle_model(4), 2);
  CHECK(retrieve_chain(m, 1, 5) == std::vector<TokenId>{2, 3, 0, 1, 2});
  TransitionMatrix cold(4, 2);
  cold.update_row(0, det_cycle_model(4).next_distribution(std::vector<TokenId>{0}));
  CHECK(retrieve_chain(cold, 0, 5) == std::vector<TokenId>{1});
}

TEST_CASE("warm-up") {
  const std::vector<TokenId> abab{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
  const auto target = train_ngram(VocabSpec{10, {}}, abab, 1, 0.0);
  const auto draft = derive_draft(target, DraftDerivation{DerivationMode::kUniformMix, 0.3});
  DecodeConfig cfg;
  cfg.k = 10;
  cfg.max_new_tokens = 16;
  const std::vector<std::vector<TokenId>> prompts{{0, 1, 0}};
  TransitionMatrix m(10, 10);
  const TransitionMatrix cold = m;
  run_warmup(cfg, target, draft, m, prompts, 0);
  CHECK(m == cold);
  const WarmupTranscript tr = run_warmup(cfg, target, draft, m, prompts, 1);
  CHECK(tr.rounds.size() == 1);
  CHECK(m.lookup(0, 0) == 1);
  CHECK(m.lookup(1, 0) == 0);
  CHECK(DecodeConfig{}.warmup_rounds == 5);

  const auto det = det_cycle_model(10);
  TransitionMatrix d(10, 10);
  const WarmupTranscript dt = run_warmup(cfg, det, det, d, std::vector<std::vector<TokenId>>{{2}}, 1);
  CHECK(dt.rounds[0].rows_touched > 0);
  for (TokenId t = 0; t < 10; ++t) {
    if (d.lookup(t, 0)) CHECK(d.lookup(t, 0) == (t + 1) % 10);
  }
}
