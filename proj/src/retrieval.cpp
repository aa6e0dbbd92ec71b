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

#include "hybridspec/retrieval.h"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <tuple>

#include "json.hpp"

namespace hybridspec {

namespace {

constexpr std::array<char, 4> kSnapshotMagic{'H', 'S', 'T', 'M'};
constexpr uint32_t kSnapshotVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  const std::array<unsigned char, 4> b{static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                       static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b.data()), 4);
}

uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (!in) throw InputError("matrix snapshot is truncated");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

TransitionMatrix::TransitionMatrix(int32_t vocab_size, int32_t k) : vocab_size_(vocab_size), k_(k) {
  if (vocab_size < 1) throw ConfigError("matrix vocabulary must be positive");
  if (k < 0 || k > vocab_size) throw ConfigError("successor count k must lie in [0, vocab]");
  ids_.assign(static_cast<size_t>(vocab_size) * static_cast<size_t>(k), 0);
  valid_.assign(ids_.size(), 0);
}

std::optional<TokenId> TransitionMatrix::lookup(TokenId token, int32_t rank) const {
  if (token < 0 || token >= vocab_size_) throw InputError("lookup token out of range");
  if (rank < 0 || rank >= k_) throw InputError("lookup rank out of range");
  const size_t s = slot(token, rank);
  if (!valid_[s]) return std::nullopt;
  return ids_[s];
}

int32_t TransitionMatrix::valid_count(TokenId token) const {
  if (token < 0 || token >= vocab_size_) throw InputError("row token out of range");
  int32_t n = 0;
  while (n < k_ && valid_[slot(token, n)]) ++n;
  return n;
}

void TransitionMatrix::update_row(TokenId token, const Distribution& dist) {
  if (token < 0 || token >= vocab_size_) throw InputError("update token out of range");
  if (dist.size() != vocab_size_) throw InputError("distribution size does not match matrix vocabulary");
  const auto top = dist.top_k(k_);
  for (int32_t r = 0; r < k_; ++r) {
    ids_[slot(token, r)] = top[static_cast<size_t>(r)];
    valid_[slot(token, r)] = 1;
  }
}

void TransitionMatrix::update_from_verification(std::span<const NodeDistribution> nodes) {
  for (const NodeDistribution& n : nodes) update_row(n.token, *n.dist);
}

size_t TransitionMatrix::touched_rows() const {
  if (k_ == 0) return 0;
  size_t n = 0;
  for (TokenId t = 0; t < vocab_size_; ++t) n += valid_[slot(t, 0)] ? 1 : 0;
  return n;
}

size_t TransitionMatrix::storage_bytes() const {
  return ids_.size() * sizeof(TokenId) + (ids_.size() + 7) / 8;
}

size_t TransitionMatrix::touched_bytes() const {
  const size_t entries = touched_rows() * static_cast<size_t>(k_);
  return entries * sizeof(TokenId) + (entries + 7) / 8;
}

void TransitionMatrix::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write matrix snapshot: " + path);
  out.write(kSnapshotMagic.data(), kSnapshotMagic.size());
  put_u32(out, kSnapshotVersion);
  put_u32(out, static_cast<uint32_t>(vocab_size_));
  put_u32(out, static_cast<uint32_t>(k_));
  for (TokenId id : ids_) put_u32(out, static_cast<uint32_t>(id));
  std::vector<unsigned char> bitmap((valid_.size() + 7) / 8, 0);
  for (size_t i = 0; i < valid_.size(); ++i) {
    if (valid_[i]) bitmap[i / 8] |= static_cast<unsigned char>(1u << (i % 8));
  }
  out.write(reinterpret_cast<const char*>(bitmap.data()), static_cast<std::streamsize>(bitmap.size()));
  if (!out) throw InputError("failed writing matrix snapshot: " + path);
}

TransitionMatrix TransitionMatrix::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open matrix snapshot: " + path);
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kSnapshotMagic) throw InputError("not a matrix snapshot: " + path);
  if (get_u32(in) != kSnapshotVersion) throw InputError("unsupported matrix snapshot version");
  const uint32_t vocab = get_u32(in);
  const uint32_t k = get_u32(in);
  if (vocab == 0 || vocab > (1u << 26) || k > vocab) throw InputError("matrix snapshot header is invalid");
  TransitionMatrix m(static_cast<int32_t>(vocab), static_cast<int32_t>(k));
  for (auto& id : m.ids_) id = static_cast<TokenId>(get_u32(in));
  std::vector<unsigned char> bitmap((m.valid_.size() + 7) / 8, 0);
  in.read(reinterpret_cast<char*>(bitmap.data()), static_cast<std::streamsize>(bitmap.size()));
  if (!in) throw InputError("matrix snapshot is truncated");
  for (size_t i = 0; i < m.valid_.size(); ++i) m.valid_[i] = (bitmap[i / 8] >> (i % 8)) & 1u;
  for (TokenId t = 0; t < m.vocab_size_; ++t) {
    std::set<TokenId> seen;
    bool cold_seen = false;
    for (int32_t r = 0; r < m.k_; ++r) {
      const size_t s = m.slot(t, r);
      if (!m.valid_[s]) {
        cold_seen = true;
        continue;
      }
      if (cold_seen) throw InputError("matrix snapshot row has a gap in its valid prefix");
      if (m.ids_[s] < 0 || m.ids_[s] >= m.vocab_size_) throw InputError("matrix snapshot id out of range");
      if (!seen.insert(m.ids_[s]).second) throw InputError("matrix snapshot row has duplicate successors");
    }
  }
  return m;
}

std::vector<int32_t> StageTemplate::depth_counts() const {
  std::vector<int32_t> counts;
  for (const TemplateNode& n : nodes) {
    if (static_cast<int32_t>(counts.size()) < n.depth) counts.resize(static_cast<size_t>(n.depth), 0);
    ++counts[static_cast<size_t>(n.depth) - 1];
  }
  return counts;
}

int32_t StageTemplate::max_rank() const {
  int32_t r = -1;
  for (const TemplateNode& n : nodes) r = std::max(r, n.rank);
  return r;
}

int32_t StageTemplate::max_depth() const {
  int32_t d = 0;
  for (const TemplateNode& n : nodes) d = std::max(d, n.depth);
  return d;
}

std::vector<int32_t> StageTemplate::rank_path(int32_t index) const {
  std::vector<int32_t> path;
  for (int32_t cur = index; cur != kRootParent; cur = nodes[static_cast<size_t>(cur)].parent) {
    path.push_back(nodes[static_cast<size_t>(cur)].rank);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

void StageTemplate::validate(int32_t k) const {
  if (static_cast<int32_t>(nodes.size()) != declared_size) throw ConfigError("template " + stage + " size mismatch");
  std::set<std::pair<int32_t, int32_t>> seen;
  for (size_t i = 0; i < nodes.size(); ++i) {
    const TemplateNode& n = nodes[i];
    if (n.rank < 0 || n.rank >= k) throw ConfigError("template " + stage + " uses rank beyond k");
    if (n.parent == kRootParent) {
      if (n.depth != 1) throw ConfigError("template root children must have depth 1");
    } else {
      if (n.parent < 0 || static_cast<size_t>(n.parent) >= i) throw ConfigError("template parent must precede child");
      if (n.depth != nodes[static_cast<size_t>(n.parent)].depth + 1) throw ConfigError("template depth mismatch");
    }
    if (i > 0 && n.depth < nodes[i - 1].depth) throw ConfigError("template must be breadth-first");
    if (!seen.emplace(n.parent, n.rank).second) throw ConfigError("template has duplicate (parent, rank)");
  }
}

namespace {

struct Candidate {
  int32_t parent;
  int32_t rank;
  int32_t rank_sum;
  std::vector<int32_t> path;
};

bool candidate_before(const Candidate& a, const Candidate& b) {
  if (a.rank_sum != b.rank_sum) return a.rank_sum < b.rank_sum;
  return a.path < b.path;
}

}  // namespace

StageTemplate generate_template(const std::string& stage, const std::vector<int32_t>& depth_counts,
                                int32_t k) {
  if (k < 1) throw ConfigError("template generation needs k >= 1");
  StageTemplate tmpl;
  tmpl.stage = stage;
  // Rank paths of the previous depth's nodes, aligned with their indices.
  std::vector<std::pair<int32_t, std::vector<int32_t>>> prev{{kRootParent, {}}};
  for (size_t d = 0; d < depth_counts.size(); ++d) {
    const int32_t want = depth_counts[d];
    if (want < 0) throw ConfigError("template depth counts must be non-negative");
    if (want == 0) break;
    std::vector<Candidate> cands;
    for (const auto& [index, path] : prev) {
      const int32_t base = std::accumulate(path.begin(), path.end(), 0);
      for (int32_t r = 0; r < k; ++r) {
        std::vector<int32_t> p = path;
        p.push_back(r);
        cands.push_back(Candidate{index, r, base + r, std::move(p)});
      }
    }
    if (static_cast<int32_t>(cands.size()) < want) {
      throw ConfigError("template " + stage + " needs more successors than k allows at depth " + std::to_string(d + 1));
    }
    std::sort(cands.begin(), cands.end(), candidate_before);
    cands.resize(static_cast<size_t>(want));
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return std::tie(a.parent, a.rank) < std::tie(b.parent, b.rank);
    });
    std::vector<std::pair<int32_t, std::vector<int32_t>>> next;
    for (Candidate& c : cands) {
      next.emplace_back(static_cast<int32_t>(tmpl.nodes.size()), c.path);
      tmpl.nodes.push_back(TemplateNode{c.parent, c.rank, static_cast<int32_t>(d) + 1});
    }
    prev = std::move(next);
  }
  tmpl.declared_size = static_cast<int32_t>(tmpl.nodes.size());
  tmpl.validate(k);
  return tmpl;
}

const std::map<std::string, std::vector<int32_t>>& builtin_depth_counts() {
  static const std::map<std::string, std::vector<int32_t>> counts{
      {"full", {8, 16, 14, 11, 8, 7, 6, 5, 5}},
      {"d0", {8, 10, 8, 6, 5, 4, 4, 4, 3}},
      {"d1", {6, 7, 5, 4, 4, 3, 3, 2, 2}},
      {"d5", {4, 3, 3, 2, 2, 2, 2, 1, 1}},
  };
  return counts;
}

TemplateSet builtin_templates(int32_t k) {
  TemplateSet set;
  for (const auto& [stage, counts] : builtin_depth_counts()) set.emplace(stage, generate_template(stage, counts, k));
  return set;
}

namespace {

// Orders template nodes by (rank-path sum, depth, rank path). Parents always
// sort ahead of their children.
std::vector<int32_t> priority_order(const StageTemplate& t) {
  std::vector<std::vector<int32_t>> paths(t.nodes.size());
  std::vector<int32_t> sums(t.nodes.size());
  for (size_t i = 0; i < t.nodes.size(); ++i) {
    paths[i] = t.rank_path(static_cast<int32_t>(i));
    sums[i] = std::accumulate(paths[i].begin(), paths[i].end(), 0);
  }
  std::vector<int32_t> order(t.nodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
    const auto ua = static_cast<size_t>(a), ub = static_cast<size_t>(b);
    return std::tie(sums[ua], t.nodes[ua].depth, paths[ua]) < std::tie(sums[ub], t.nodes[ub].depth, paths[ub]);
  });
  return order;
}

}  // namespace

StageTemplate template_prefix(const StageTemplate& source, int32_t size, const std::string& stage) {
  if (size < 0) throw ConfigError("template prefix size must be non-negative");
  auto order = priority_order(source);
  order.resize(std::min(order.size(), static_cast<size_t>(size)));
  std::sort(order.begin(), order.end());  // source is breadth-first already
  std::vector<int32_t> remap(source.nodes.size(), -1);
  StageTemplate out;
  out.stage = stage;
  for (int32_t idx : order) {
    TemplateNode n = source.nodes[static_cast<size_t>(idx)];
    if (n.parent != kRootParent) n.parent = remap[static_cast<size_t>(n.parent)];
    remap[static_cast<size_t>(idx)] = static_cast<int32_t>(out.nodes.size());
    out.nodes.push_back(n);
  }
  out.declared_size = static_cast<int32_t>(out.nodes.size());
  return out;
}

StageTemplate reshaped_template(const std::string& stage, const std::vector<int32_t>& base_counts,
                                int32_t size, int32_t max_depth, int32_t max_width, int32_t k) {
  if (max_depth < 1 || max_width < 1) throw ConfigError("template depth and width must be positive");
  std::vector<int32_t> counts(static_cast<size_t>(max_depth), 1);
  for (size_t d = 0; d < counts.size() && d < base_counts.size(); ++d) counts[d] = std::max(1, base_counts[d]);
  auto cap = [&](size_t d) {
    const int64_t feasible = d == 0 ? k : static_cast<int64_t>(counts[d - 1]) * k;
    return static_cast<int32_t>(std::min<int64_t>(max_width, feasible));
  };
  for (size_t d = 0; d < counts.size(); ++d) counts[d] = std::min(counts[d], cap(d));
  auto total = [&] { return std::accumulate(counts.begin(), counts.end(), 0); };
  // Trim the deepest layers first, keeping the depth-1 layer non-empty.
  while (total() > size) {
    size_t d = counts.size() - 1;
    while (d > 0 && counts[d] == 0) --d;
    if (d == 0 && counts[0] <= 1) break;
    --counts[d];
    if (counts[d] == 0) counts.resize(d);
  }
  // Grow shallow-first, round robin, within the width and rank limits.
  bool grew = true;
  while (total() < size && grew) {
    grew = false;
    for (size_t d = 0; d < counts.size() && total() < size; ++d) {
      if (counts[d] < cap(d)) {
        ++counts[d];
        grew = true;
      }
    }
  }
  return generate_template(stage, counts, k);
}

TemplateSet load_templates(const std::string& path, int32_t k) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open template file: " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("template file is not valid JSON: " + std::string(e.what()));
  }
  TemplateSet set;
  try {
    for (const auto& t : doc.at("templates")) {
      StageTemplate tmpl;
      tmpl.stage = t.at("stage").get<std::string>();
      for (const auto& n : t.at("nodes")) {
        TemplateNode node;
        node.parent = n.at("parent").get<int32_t>();
        node.rank = n.at("rank").get<int32_t>();
        if (node.parent == kRootParent) {
          node.depth = 1;
        } else if (node.parent >= 0 && static_cast<size_t>(node.parent) < tmpl.nodes.size()) {
          node.depth = tmpl.nodes[static_cast<size_t>(node.parent)].depth + 1;
        } else {
          throw ConfigError("template " + tmpl.stage + ": parent must precede child");
        }
        tmpl.nodes.push_back(node);
      }
      tmpl.declared_size = t.contains("declared_size") ? t.at("declared_size").get<int32_t>()
                                                       : static_cast<int32_t>(tmpl.nodes.size());
      tmpl.validate(k);
      set[tmpl.stage] = std::move(tmpl);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed template file: " + std::string(e.what()));
  }
  return set;
}

void save_templates(const TemplateSet& set, const std::string& path) {
  nlohmann::json doc;
  doc["templates"] = nlohmann::json::array();
  for (const auto& [stage, t] : set) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const TemplateNode& n : t.nodes) nodes.push_back({{"parent", n.parent}, {"rank", n.rank}});
    doc["templates"].push_back({{"stage", stage}, {"declared_size", t.declared_size}, {"nodes", nodes}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write template file: " + path);
  out << doc.dump(2) << "\n";
}

RetrievedBranch instantiate(const TransitionMatrix& matrix, const StageTemplate& tmpl, TokenId root) {
  RetrievedBranch branch;
  branch.root_token = root;
  branch.declared_size = tmpl.declared_size;
  std::vector<int32_t> realized(tmpl.nodes.size(), -1);
  for (size_t i = 0; i < tmpl.nodes.size(); ++i) {
    const TemplateNode& n = tmpl.nodes[i];
    if (n.rank >= matrix.k()) continue;
    int32_t parent_branch = kRootParent;
    TokenId parent_token = root;
    if (n.parent != kRootParent) {
      parent_branch = realized[static_cast<size_t>(n.parent)];
      if (parent_branch < 0) continue;
      parent_token = branch.nodes[static_cast<size_t>(parent_branch)].token;
    }
    const auto tok = matrix.lookup(parent_token, n.rank);
    if (!tok) continue;
    realized[i] = static_cast<int32_t>(branch.nodes.size());
    branch.nodes.push_back(RetrievedNode{*tok, parent_branch, n.depth, n.rank, static_cast<int32_t>(i)});
  }
  return branch;
}

std::vector<TokenId> retrieve_chain(const TransitionMatrix& matrix, TokenId start, int32_t length) {
  std::vector<TokenId> chain;
  if (matrix.k() == 0) return chain;
  TokenId cur = start;
  for (int32_t i = 0; i < length; ++i) {
    const auto next = matrix.lookup(cur, 0);
    if (!next) break;
    chain.push_back(*next);
    cur = *next;
  }
  return chain;
}

WarmupTranscript warmup(TransitionMatrix& matrix, const WarmupSession& run_session,
                        std::span<const std::vector<TokenId>> prompts, int32_t rounds) {
  if (rounds < 0) throw ConfigError("warm-up rounds must be non-negative");
  WarmupTranscript transcript;
  if (rounds == 0) return transcript;
  if (prompts.empty()) throw ConfigError("warm-up needs at least one prompt");
  for (int32_t r = 0; r < rounds; ++r) {
    const size_t idx = static_cast<size_t>(r) % prompts.size();
    WarmupRound round = run_session(matrix, prompts[idx]);
    round.round = r;
    round.prompt_index = idx;
    round.rows_touched = matrix.touched_rows();
    transcript.rounds.push_back(std::move(round));
  }
  return transcript;
}

}  // namespace hybridspec
