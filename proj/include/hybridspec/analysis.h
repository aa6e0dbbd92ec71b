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

// Randomized property harnesses and matched-seed ablation suites.

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hybridspec/engine.h"

namespace hybridspec {

// Random well-formed tree of `size` nodes over `vocab`. With probability
// `follow` a new child takes the target argmax of its parent, so deep
// acceptances occur often.
HybridTree random_tree(const MarkovTableModel& target, std::span<const TokenId> committed, int32_t size,
                       double follow, Rng& rng);
// Parent-closed random subset: each child kept with probability `keep`.
HybridTree random_subtree(const HybridTree& tree, double keep, Rng& rng);

struct PropertyResult {
  std::string name;
  int64_t instances = 0;
  int64_t violations = 0;
  double measured = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct TheoryReport {
  std::vector<PropertyResult> properties;
  bool all_passed() const;
};

struct TheoryOptions {
  int64_t subset_pairs = 10000;
  int64_t graft_pairs = 10000;
  int64_t frontiers = 1000;
  int64_t overprune_trials = 100000;
  std::vector<double> gate_error_rates{0.1, 0.1, 0.1};
};

// Subset monotonicity, graft non-decrease, coverage-gain sign and identity,
// and over-pruning compounding under independent synthetic gate errors.
TheoryReport theory_checks(std::span<const uint64_t> seeds, const TheoryOptions& options = {});

struct OverpruneMeasurement {
  int64_t trials = 0;
  int64_t harmful = 0;  // steps with a prune while the dense tree accepts deeper
  std::vector<double> per_checkpoint_rate;
  double rate() const { return trials > 0 ? static_cast<double>(harmful) / trials : 0.0; }
};

// Runs resolve_stage on a perfect drafter with each gate failing
// independently with probability epsilons[i] and counts harmful prunes.
OverpruneMeasurement measure_overpruning(std::span<const double> epsilons, int64_t trials, uint64_t seed);

struct AblationFixture {
  const MarkovTableModel* target = nullptr;
  const MarkovTableModel* draft = nullptr;
  std::vector<std::vector<TokenId>> warmup_prompts;
  // Seed i decodes eval_prompts[i % size].
  std::vector<std::vector<TokenId>> eval_prompts;
  std::vector<uint64_t> seeds;
  DecodeConfig base;
};

struct AblationRow {
  std::string label;
  DecodeConfig config;
  std::vector<DecodeReport> per_seed;
  double mean_mat = 0.0;
  double mean_proxy = 0.0;
};

struct AblationReport {
  std::string suite;
  std::vector<AblationRow> rows;
  const AblationRow& row(const std::string& label) const;
};

// Suite names: component, warmup, template-depth, template-width, temperature.
const std::vector<std::string>& ablation_suites();

// Labelled configurations a suite evaluates.
std::vector<std::pair<std::string, DecodeConfig>> suite_variants(const std::string& suite, const DecodeConfig& base);

// Each variant warms a fresh matrix with its own rounds on the warm-up
// prompts, then decodes every seed from a copy of that matrix. Runs are
// spread over `jobs` threads; results do not depend on `jobs`.
AblationReport run_ablation(const std::string& suite, const AblationFixture& fixture, int32_t jobs = 1);
AblationReport run_variants(const std::string& suite, const std::vector<std::pair<std::string, DecodeConfig>>& variants,
                            const AblationFixture& fixture, int32_t jobs = 1);

// Runs fn(0..count-1) on up to `jobs` threads.
void parallel_for(size_t count, int32_t jobs, const std::function<void(size_t)>& fn);

}  // namespace hybridspec
