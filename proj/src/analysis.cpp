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

#include "hybridspec/analysis.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

namespace hybridspec {

HybridTree random_tree(const MarkovTableModel& target, std::span<const TokenId> committed, int32_t size,
                       double follow, Rng& rng) {
  const int32_t vocab = target.vocab().size;
  HybridTree t;
  t.budget = std::max(size, 1);
  t.tokens = {committed.back()};
  t.parents = {kRootParent};
  t.origin = {NodeOrigin::kDraft};
  t.depths = {0};
  t.scores = {0.0};
  std::vector<std::set<TokenId>> used(1);
  const auto window = static_cast<size_t>(target.order());
  int32_t attempts = 0;
  while (t.size() < size && attempts < size * 50) {
    ++attempts;
    const auto parent = static_cast<int32_t>(rng.below(static_cast<uint64_t>(t.size())));
    TokenId tok = 0;
    if (rng.uniform() < follow) {
      const auto ctx = context_window(committed, t.path_tokens(parent), window);
      tok = target.next_distribution(ctx).argmax();
    } else {
      tok = static_cast<TokenId>(rng.below(static_cast<uint64_t>(vocab)));
    }
    if (!used[static_cast<size_t>(parent)].insert(tok).second) continue;
    t.tokens.push_back(tok);
    t.parents.push_back(parent);
    t.origin.push_back(rng.uniform() < 0.5 ? NodeOrigin::kDraft : NodeOrigin::kRetrieved);
    t.depths.push_back(t.depths[static_cast<size_t>(parent)] + 1);
    t.scores.push_back(0.0);
    used.emplace_back();
  }
  return canonicalize(t);
}

HybridTree random_subtree(const HybridTree& tree, double keep, Rng& rng) {
  std::vector<int32_t> remap(static_cast<size_t>(tree.size()), -1);
  HybridTree out;
  out.budget = tree.budget;
  for (int32_t i = 0; i < tree.size(); ++i) {
    const auto s = static_cast<size_t>(i);
    int32_t parent = kRootParent;
    if (i > 0) {
      parent = remap[static_cast<size_t>(tree.parents[s])];
      if (parent < 0 || rng.uniform() >= keep) continue;
    }
    remap[s] = out.size();
    out.tokens.push_back(tree.tokens[s]);
    out.parents.push_back(parent);
    out.origin.push_back(tree.origin[s]);
    out.depths.push_back(tree.depths[s]);
    out.scores.push_back(tree.scores[s]);
  }
  return canonicalize(out);
}

bool TheoryReport::all_passed() const {
  return std::all_of(properties.begin(), properties.end(), [](const PropertyResult& p) { return p.passed; });
}

namespace {

int32_t greedy_len(const MarkovTableModel& target, std::span<const TokenId> committed, const HybridTree& tree) {
  return verify_greedy(target, committed, flatten(tree, static_cast<int32_t>(committed.size()) - 1)).accepted_len;
}

std::vector<TokenId> random_prefix(int32_t vocab, Rng& rng) {
  std::vector<TokenId> p(1 + rng.below(4));
  for (auto& t : p) t = static_cast<TokenId>(rng.below(static_cast<uint64_t>(vocab)));
  return p;
}

int64_t share(int64_t total, size_t parts, size_t index) {
  const auto p = static_cast<int64_t>(parts);
  return total / p + (static_cast<int64_t>(index) < total % p ? 1 : 0);
}

}  // namespace

OverpruneMeasurement measure_overpruning(std::span<const double> epsilons, int64_t trials, uint64_t seed) {
  const MarkovTableModel model = det_cycle_model(16);
  PruneConfig config;
  if (epsilons.size() != config.checkpoints.size()) throw ConfigError("one gate error rate per checkpoint is required");
  const std::vector<TokenId> committed{0};
  const DraftTree full = build_full_tree(committed, model, config);
  const HybridTree dense = from_draft(full, select_top_closed(full, config.total_budget), config.total_budget);
  const int32_t dense_len = greedy_len(model, committed, dense);

  Rng rng(seed);
  auto gate = [&](size_t index, double, double) { return rng.uniform() >= epsilons[index]; };
  OverpruneMeasurement m;
  std::vector<int64_t> reached(epsilons.size(), 0), harmful(epsilons.size(), 0);
  for (int64_t t = 0; t < trials; ++t) {
    const PruneDecision d = resolve_stage(committed, config, model, gate);
    ++m.trials;
    for (size_t i = 0; i < d.confidence_trace.size(); ++i) ++reached[i];
    if (d.pruned() && dense_len > d.layers_expanded) {
      ++m.harmful;
      ++harmful[static_cast<size_t>(d.stage_index)];
    }
  }
  for (size_t i = 0; i < epsilons.size(); ++i) {
    m.per_checkpoint_rate.push_back(reached[i] > 0 ? static_cast<double>(harmful[i]) / reached[i] : 0.0);
  }
  return m;
}

TheoryReport theory_checks(std::span<const uint64_t> seeds, const TheoryOptions& options) {
  if (seeds.empty()) throw ConfigError("theory checks need at least one seed");
  TheoryReport report;
  PropertyResult subset{"subset_monotonicity"};
  PropertyResult graft{"graft_non_decrease"};
  PropertyResult coverage{"coverage_gain"};
  subset.passed = graft.passed = coverage.passed = true;

  for (size_t si = 0; si < seeds.size(); ++si) {
    const uint64_t seed = seeds[si];
    Rng rng(mix_seed(seed, 11));
    const VocabSpec vocab{6 + static_cast<int32_t>(rng.below(10)), {}};
    const auto order = static_cast<int32_t>(1 + rng.below(2));
    const MarkovTableModel target = build_markov(vocab, order, mix_seed(seed, 12), 0.3);
    const MarkovTableModel draft = derive_draft(target, DraftDerivation{DerivationMode::kUniformMix, 0.5});

    for (int64_t n = share(options.subset_pairs, seeds.size(), si); n > 0; --n) {
      const auto committed = random_prefix(vocab.size, rng);
      const HybridTree t2 = random_tree(target, committed, 1 + static_cast<int32_t>(rng.below(60)), 0.5, rng);
      const HybridTree t1 = random_subtree(t2, rng.uniform(), rng);
      ++subset.instances;
      if (greedy_len(target, committed, t1) > greedy_len(target, committed, t2)) ++subset.violations;
    }

    PruneConfig pc;
    for (int64_t n = share(options.graft_pairs, seeds.size(), si); n > 0; --n) {
      const auto committed = random_prefix(vocab.size, rng);
      for (double& t : pc.thresholds) t = 0.05 + 0.9 * rng.uniform();
      const PruneDecision d = resolve_stage(committed, pc, draft);
      const int32_t k = 1 + static_cast<int32_t>(rng.below(static_cast<uint64_t>(vocab.size)));
      TransitionMatrix m(vocab.size, k);
      for (TokenId tok = 0; tok < vocab.size; ++tok) {
        if (rng.uniform() < 0.7) m.update_row(tok, target.rows()[rng.below(target.rows().size())]);
      }
      const auto counts = builtin_depth_counts().at("d0");
      const StageTemplate tmpl = reshaped_template("g", counts, 1 + static_cast<int32_t>(rng.below(52)), 9, 1000, k);
      const RetrievedBranch branch = instantiate(m, tmpl, committed.back());
      const HybridTree pruned = from_draft(d.tree, d.retained, pc.total_budget);
      const HybridTree merged = merge(d, branch, pc.total_budget);
      ++graft.instances;
      if (!is_subtree(pruned, merged) || greedy_len(target, committed, merged) < greedy_len(target, committed, pruned)) {
        ++graft.violations;
      }
    }

    for (int64_t n = share(options.frontiers, seeds.size(), si); n > 0; --n) {
      const Distribution& p = target.rows()[rng.below(target.rows().size())];
      std::vector<TokenId> s, r;
      for (TokenId t = 0; t < vocab.size; ++t) {
        if (rng.uniform() < 0.4) s.push_back(t);
        if (rng.uniform() < 0.4) r.push_back(t);
      }
      const double gain = coverage_gain(p, s, r);
      std::set<TokenId> uni(s.begin(), s.end());
      uni.insert(r.begin(), r.end());
      double cov_union = 0.0, cov_s = 0.0;
      bool fresh_mass = false;
      for (TokenId t : uni) cov_union += p[t];
      for (TokenId t : s) cov_s += p[t];
      for (TokenId t : r) fresh_mass |= std::find(s.begin(), s.end(), t) == s.end() && p[t] > 0.0;
      ++coverage.instances;
      const bool ok = gain >= 0.0 && std::abs(gain - (cov_union - cov_s)) <= 1e-12 && (!fresh_mass || gain > 0.0);
      if (!ok) ++coverage.violations;
    }
  }
  for (PropertyResult* p : {&subset, &graft, &coverage}) {
    p->passed = p->violations == 0;
    p->measured = static_cast<double>(p->violations);
    report.properties.push_back(*p);
  }

  PropertyResult over{"overpruning_compounding"};
  const OverpruneMeasurement m = measure_overpruning(options.gate_error_rates, options.overprune_trials, mix_seed(seeds[0], 13));
  double survive = 1.0;
  for (double e : options.gate_error_rates) survive *= 1.0 - e;
  over.instances = m.trials;
  over.measured = m.rate();
  over.expected = 1.0 - survive;
  const double sigma = std::sqrt(over.expected * (1.0 - over.expected) / std::max<int64_t>(m.trials, 1));
  over.tolerance = 4.0 * sigma;
  over.passed = std::abs(over.measured - over.expected) <= over.tolerance;
  over.violations = over.passed ? 0 : 1;
  report.properties.push_back(over);
  return report;
}

const AblationRow& AblationReport::row(const std::string& label) const {
  for (const AblationRow& r : rows) {
    if (r.label == label) return r;
  }
  throw AnalysisError("ablation row not found: " + label);
}

const std::vector<std::string>& ablation_suites() {
  static const std::vector<std::string> suites{"component", "warmup", "template-depth", "template-width", "temperature"};
  return suites;
}

namespace {

TemplateSet reshaped_set(int32_t depth, int32_t width, int32_t k) {
  TemplateSet set;
  for (const auto& [stage, counts] : builtin_depth_counts()) {
    int32_t size = 0;
    for (int32_t c : counts) size += c;
    set.emplace(stage, reshaped_template(stage, counts, size, depth, width, k));
  }
  return set;
}

}  // namespace

std::vector<std::pair<std::string, DecodeConfig>> suite_variants(const std::string& suite, const DecodeConfig& base) {
  std::vector<std::pair<std::string, DecodeConfig>> out;
  auto with = [&](const std::string& label, auto&& edit) {
    DecodeConfig c = base;
    edit(c);
    out.emplace_back(label, std::move(c));
  };
  if (suite == "component") {
    for (Method m : {Method::kGraft, Method::kPruneOnly, Method::kFixedSplit, Method::kDense}) {
      with(to_string(m), [&](DecodeConfig& c) { c.method = m; });
    }
  } else if (suite == "warmup") {
    for (int32_t rounds : {0, 1, 3, 5, 10, 25, 50}) {
      with("K=" + std::to_string(rounds), [&](DecodeConfig& c) {
        c.method = Method::kGraft;
        c.warmup_rounds = rounds;
      });
    }
  } else if (suite == "template-depth") {
    for (int32_t d : {2, 4, 6, 8, 9}) {
      with("depth=" + std::to_string(d), [&](DecodeConfig& c) {
        c.method = Method::kGraft;
        c.templates = reshaped_set(d, 1000, c.k);
      });
    }
  } else if (suite == "template-width") {
    for (int32_t w : {2, 4, 6, 8, 10, 12}) {
      with("width=" + std::to_string(w), [&](DecodeConfig& c) {
        c.method = Method::kGraft;
        c.templates = reshaped_set(9, w, c.k);
      });
    }
  } else if (suite == "temperature") {
    for (Method m : {Method::kGraft, Method::kDense}) {
      for (Acceptance a : {Acceptance::kGreedy, Acceptance::kStochastic}) {
        with(to_string(m) + "/" + to_string(a), [&](DecodeConfig& c) {
          c.method = m;
          c.acceptance = a;
        });
      }
    }
  } else {
    throw ConfigError("unknown ablation suite: " + suite);
  }
  return out;
}

void parallel_for(size_t count, int32_t jobs, const std::function<void(size_t)>& fn) {
  const auto workers = static_cast<size_t>(std::clamp<int64_t>(jobs, 1, std::max<int64_t>(1, static_cast<int64_t>(count))));
  if (workers <= 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

AblationReport run_variants(const std::string& suite, const std::vector<std::pair<std::string, DecodeConfig>>& variants,
                            const AblationFixture& fixture, int32_t jobs) {
  if (fixture.target == nullptr || fixture.draft == nullptr) throw ConfigError("ablation fixture needs models");
  if (fixture.eval_prompts.empty() || fixture.seeds.empty()) throw ConfigError("ablation fixture needs prompts and seeds");
  AblationReport report;
  report.suite = suite;
  const int32_t vocab = fixture.target->vocab().size;

  std::vector<TransitionMatrix> warmed;
  warmed.reserve(variants.size());
  for (const auto& [label, config] : variants) {
    TransitionMatrix m(vocab, config.k);
    if (uses_retrieval(config.method) && config.warmup_rounds > 0) {
      run_warmup(config, *fixture.target, *fixture.draft, m, fixture.warmup_prompts, config.warmup_rounds);
    }
    warmed.push_back(std::move(m));
    report.rows.push_back(AblationRow{label, config, {}, 0.0, 0.0});
    report.rows.back().per_seed.resize(fixture.seeds.size());
  }

  const size_t n_seeds = fixture.seeds.size();
  parallel_for(variants.size() * n_seeds, jobs, [&](size_t task) {
    const size_t v = task / n_seeds;
    const size_t s = task % n_seeds;
    DecodeConfig c = variants[v].second;
    c.seed = fixture.seeds[s];
    TransitionMatrix m = warmed[v];
    const auto& prompt = fixture.eval_prompts[s % fixture.eval_prompts.size()];
    report.rows[v].per_seed[s] = decode_session(c, *fixture.target, *fixture.draft, m, prompt).report;
  });

  for (AblationRow& row : report.rows) {
    for (const DecodeReport& r : row.per_seed) {
      row.mean_mat += r.mat;
      row.mean_proxy += r.speedup_proxy;
    }
    row.mean_mat /= static_cast<double>(n_seeds);
    row.mean_proxy /= static_cast<double>(n_seeds);
  }
  return report;
}

AblationReport run_ablation(const std::string& suite, const AblationFixture& fixture, int32_t jobs) {
  return run_variants(suite, suite_variants(suite, fixture.base), fixture, jobs);
}

}  // namespace hybridspec
