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

// Decode loop, tree-building strategies, cost model and run metrics.

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hybridspec/common.h"
#include "hybridspec/drafttree.h"
#include "hybridspec/hybrid.h"
#include "hybridspec/models.h"
#include "hybridspec/retrieval.h"
#include "hybridspec/verify.h"

namespace hybridspec {

enum class Method { kDense, kPruneOnly, kFixedSplit, kGraft, kGraftRoot, kGraftTail, kAutoregressive };

std::string to_string(Method method);
Method parse_method(const std::string& name);
// The six tree-building methods, in declaration order.
const std::vector<Method>& tree_methods();
bool uses_retrieval(Method method);

enum class Acceptance { kGreedy, kStochastic };

std::string to_string(Acceptance acceptance);
Acceptance parse_acceptance(const std::string& name);

// Abstract time units per step. Category names follow a typical runtime
// breakdown of tree speculative decoding.
struct CostModel {
  double t_ar = 1.0;
  double draft_layer_cost = 0.18;
  double verify_base = 0.55;
  double verify_per_node = 0.004;
  // Extra verify cost per committed token before the root.
  double verify_context_coeff = 0.0;
  // Charged per step that instantiates a retrieval branch. Zero models
  // retrieval overlapped with drafting.
  double retrieval_cost = 0.0;
  double merge_cost = 0.0005;
  double rebuild_cost = 0.0125;
  double update_cost = 0.007;
  double posterior_cost = 0.0;
  double kv_update_cost = 0.0;

  void validate() const;
};

struct CostBreakdown {
  double draft = 0.0;
  double merge = 0.0;
  double rebuild = 0.0;
  double verify = 0.0;
  double retrieval = 0.0;
  double matrix_update = 0.0;
  double posterior = 0.0;
  double kv_update = 0.0;

  double total() const;
  CostBreakdown& operator+=(const CostBreakdown& other);
};

struct DecodeConfig {
  Method method = Method::kGraft;
  PruneConfig prune;
  // Empty means builtin_templates(k).
  TemplateSet templates;
  int32_t k = 10;
  int32_t max_new_tokens = 128;
  Acceptance acceptance = Acceptance::kGreedy;
  uint64_t seed = 0;
  int32_t warmup_rounds = 5;
  bool updates_enabled = true;
  // Constant split used by fixed_split.
  StageBudget fixed_split{24, 36};
  // Retrieval branch size for graft_root.
  int32_t root_branch_size = 20;
  // Rank-0 chain length for graft_tail.
  int32_t tail_chain_length = 8;
  std::optional<TokenId> end_token;
  // Also build and verify the dense tree on every committed prefix (greedy
  // only) so regret and over-pruning can be estimated.
  bool dense_replay = false;
  CostModel cost;

  void validate() const;
};

// Output of one tree-building step.
struct TreeBuild {
  HybridTree tree;
  int32_t stage = kNoStage;
  int32_t layers_expanded = 0;
  int32_t draft_nodes = 0;
  int32_t declared_retrieval = 0;
  int32_t realized_retrieval = 0;
  bool grafted = false;  // a retrieval branch was instantiated
  std::vector<CheckpointConfidence> confidence_trace;
  // Depth-1 candidates on each side of the root frontier.
  std::vector<TokenId> root_draft_children;
  std::vector<TokenId> root_retrieved;
};

// Resolves templates once and builds per-step trees for one method.
class TreeBuilder {
 public:
  explicit TreeBuilder(const DecodeConfig& config);

  TreeBuild build(std::span<const TokenId> committed, const MarkovTableModel& draft,
                  const TransitionMatrix& matrix) const;

  const DecodeConfig& config() const { return config_; }
  // Template instantiated at pruning stage `stage_index`.
  const StageTemplate& stage_template(size_t stage_index) const { return stage_templates_[stage_index]; }

 private:
  DecodeConfig config_;
  std::vector<StageTemplate> stage_templates_;
  StageTemplate split_template_;
  StageTemplate root_template_;
};

// Retrieval template of `size` nodes for `stage`: the named template when it
// fits, otherwise the priority prefix of the named (or full) template.
StageTemplate retrieval_template(const TemplateSet& templates, const std::string& stage, int32_t size);

TreeBuild build_next_tree(const DecodeConfig& config, std::span<const TokenId> committed,
                          const MarkovTableModel& draft, const TransitionMatrix& matrix);

// Target mass of retrieved tokens missing from the draft sibling set.
double coverage_gain(const Distribution& target, std::span<const TokenId> draft_siblings,
                     std::span<const TokenId> retrieved);

CostBreakdown step_cost(const CostModel& cost, Method method, const TreeBuild& build, int32_t prefix_len,
                        bool updates_enabled);

struct StepRecord {
  int32_t step = 0;
  int32_t prefix_len = 0;  // committed length before the root
  TokenId root = 0;
  int32_t stage = kNoStage;
  int32_t layers_expanded = 0;
  int32_t tree_size = 0;
  int32_t draft_nodes = 0;
  int32_t retrieved_nodes = 0;
  int32_t declared_retrieval = 0;
  int32_t realized_retrieval = 0;
  int32_t accepted_len = 0;
  int32_t emitted = 0;    // accepted + bonus
  int32_t committed = 0;  // emitted, truncated at max_new_tokens or the end token
  CostBreakdown cost;
  std::optional<double> coverage_gain;
  std::vector<CheckpointConfidence> confidence_trace;
};

// Dense tree verified on the same committed prefix as a method step.
struct ReplayRecord {
  int32_t prefix_len = 0;
  TokenId root = 0;
  int32_t accepted_len = 0;
  bool method_tree_within_dense = false;
};

struct DecodeReport {
  Method method = Method::kGraft;
  int32_t steps = 0;
  int32_t tokens_emitted = 0;
  double mat = 0.0;
  double cost_total = 0.0;
  CostBreakdown cost_by_category;
  double speedup_proxy = 0.0;
  // Present when a dense reference report is supplied.
  std::optional<double> mat_loss;
  std::optional<double> latency_saving;
  std::optional<double> tradeoff_ratio;
  // Present with a paired dense replay.
  std::optional<double> regret_estimate;
  std::map<std::string, double> overpruning_rate_estimates;
  std::vector<double> coverage_gain_samples;
  double realized_retrieval_fill = 0.0;
  std::map<std::string, int32_t> stage_histogram;
  int32_t max_tree_size = 0;
};

// mat = committed tokens / steps; proxy = tokens * t_ar / cost_total.
// Throws AnalysisError when `replay` is non-empty and its prefixes do not
// line up with `steps`.
DecodeReport compute_metrics(Method method, std::span<const StepRecord> steps, const CostModel& cost,
                             const PruneConfig& prune, std::span<const ReplayRecord> replay = {},
                             const DecodeReport* dense_reference = nullptr);

// Fills mat_loss, latency_saving and tradeoff_ratio of `report` from a dense run.
void attach_tradeoff(DecodeReport& report, const DecodeReport& dense);

struct SessionResult {
  std::vector<TokenId> output;  // generated tokens only
  std::vector<StepRecord> steps;
  std::vector<ReplayRecord> replay;
  DecodeReport report;
};

// One decode run. The matrix is read and, for retrieval methods with updates
// enabled, refreshed from the prompt and from every verified node.
SessionResult decode_session(const DecodeConfig& config, const MarkovTableModel& target,
                             const MarkovTableModel& draft, TransitionMatrix& matrix,
                             std::span<const TokenId> prompt);

// Pure target greedy continuation.
std::vector<TokenId> greedy_reference(const MarkovTableModel& target, std::span<const TokenId> prompt,
                                      int32_t max_new_tokens, std::optional<TokenId> end_token = std::nullopt);

// Warm-up rounds as decode sessions with updates on; output is discarded.
WarmupTranscript run_warmup(const DecodeConfig& config, const MarkovTableModel& target,
                            const MarkovTableModel& draft, TransitionMatrix& matrix,
                            std::span<const std::vector<TokenId>> prompts, int32_t rounds);

struct CalibrationPoint {
  std::vector<double> thresholds;
  double objective = 0.0;
};

struct CalibrationResult {
  std::vector<double> thresholds;
  double objective = 0.0;
  std::vector<CalibrationPoint> objective_trace;  // each vector once, in evaluation order
};

// Coordinate-wise search over `grid` (one ascending candidate list per
// checkpoint), two sweeps, starting from the lowest candidate of each list.
// Objective: mean proxy over `prompts`, each decoded from a copy of
// `matrix`. A move needs a strict improvement, so ties keep the lower vector.
CalibrationResult calibrate(const DecodeConfig& config, const MarkovTableModel& target,
                            const MarkovTableModel& draft, const TransitionMatrix& matrix,
                            std::span<const std::vector<TokenId>> prompts,
                            const std::vector<std::vector<double>>& grid, int32_t sweeps = 2);

// Mean proxy of `config` over `prompts`, each from a copy of `matrix`.
double calibration_objective(const DecodeConfig& config, const MarkovTableModel& target,
                             const MarkovTableModel& draft, const TransitionMatrix& matrix,
                             std::span<const std::vector<TokenId>> prompts);

}  // namespace hybridspec
