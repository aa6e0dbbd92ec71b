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

#include "hybridspec/engine.h"

#include <algorithm>
#include <cmath>
#include <set>

namespace hybridspec {

namespace {

const std::map<Method, std::string>& method_names() {
  static const std::map<Method, std::string> names{
      {Method::kDense, "dense"},           {Method::kPruneOnly, "prune_only"},
      {Method::kFixedSplit, "fixed_split"}, {Method::kGraft, "graft"},
      {Method::kGraftRoot, "graft_root"},   {Method::kGraftTail, "graft_tail"},
      {Method::kAutoregressive, "autoregressive"},
  };
  return names;
}

}  // namespace

std::string to_string(Method method) { return method_names().at(method); }

Method parse_method(const std::string& name) {
  for (const auto& [m, n] : method_names()) {
    if (n == name) return m;
  }
  throw ConfigError("unknown method: " + name);
}

const std::vector<Method>& tree_methods() {
  static const std::vector<Method> methods{Method::kDense,  Method::kPruneOnly, Method::kFixedSplit,
                                           Method::kGraft, Method::kGraftRoot, Method::kGraftTail};
  return methods;
}

bool uses_retrieval(Method method) {
  return method == Method::kFixedSplit || method == Method::kGraft || method == Method::kGraftRoot ||
         method == Method::kGraftTail;
}

std::string to_string(Acceptance acceptance) {
  return acceptance == Acceptance::kGreedy ? "greedy" : "stochastic";
}

Acceptance parse_acceptance(const std::string& name) {
  if (name == "greedy") return Acceptance::kGreedy;
  if (name == "stochastic") return Acceptance::kStochastic;
  throw ConfigError("unknown acceptance mode: " + name);
}

void CostModel::validate() const {
  for (double v : {t_ar, draft_layer_cost, verify_base, verify_per_node, verify_context_coeff, retrieval_cost,
                   merge_cost, rebuild_cost, update_cost, posterior_cost, kv_update_cost}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("cost model entries must be finite and non-negative");
  }
  if (!(t_ar > 0.0)) throw ConfigError("t_ar must be positive");
}

double CostBreakdown::total() const {
  return draft + merge + rebuild + verify + retrieval + matrix_update + posterior + kv_update;
}

CostBreakdown& CostBreakdown::operator+=(const CostBreakdown& o) {
  draft += o.draft;
  merge += o.merge;
  rebuild += o.rebuild;
  verify += o.verify;
  retrieval += o.retrieval;
  matrix_update += o.matrix_update;
  posterior += o.posterior;
  kv_update += o.kv_update;
  return *this;
}

void DecodeConfig::validate() const {
  prune.validate();
  cost.validate();
  if (k < 0) throw ConfigError("k must be non-negative");
  if (max_new_tokens < 0) throw ConfigError("max_new_tokens must be non-negative");
  if (warmup_rounds < 0) throw ConfigError("warmup_rounds must be non-negative");
  if (method == Method::kFixedSplit &&
      (fixed_split.draft < 1 || fixed_split.retrieval < 0 || fixed_split.draft + fixed_split.retrieval != prune.total_budget)) {
    throw ConfigError("fixed split must satisfy K_draft + K_ret = K_max with K_draft >= 1");
  }
  if (root_branch_size < 0 || root_branch_size >= prune.total_budget) {
    throw ConfigError("root branch size must lie in [0, K_max)");
  }
  if (tail_chain_length < 0 || tail_chain_length >= prune.total_budget) {
    throw ConfigError("tail chain length must lie in [0, K_max)");
  }
}

StageTemplate retrieval_template(const TemplateSet& templates, const std::string& stage, int32_t size) {
  if (size <= 0) return StageTemplate{stage, {}, 0};
  if (auto it = templates.find(stage); it != templates.end()) {
    if (it->second.declared_size <= size) return it->second;
    return template_prefix(it->second, size, stage);
  }
  for (const auto& [name, t] : templates) {
    if (t.declared_size == size) {
      StageTemplate out = t;
      out.stage = stage;
      return out;
    }
  }
  auto full = templates.find("full");
  if (full == templates.end()) throw ConfigError("no template fits stage " + stage + " and no full template exists");
  return template_prefix(full->second, size, stage);
}

TreeBuilder::TreeBuilder(const DecodeConfig& config) : config_(config) {
  config_.validate();
  if (config_.templates.empty() && uses_retrieval(config_.method)) config_.templates = builtin_templates(config_.k);
  for (const auto& [name, t] : config_.templates) t.validate(std::max(config_.k, 1));
  if (!uses_retrieval(config_.method)) return;
  const PruneConfig& pc = config_.prune;
  for (size_t i = 0; i < pc.checkpoints.size(); ++i) {
    stage_templates_.push_back(
        retrieval_template(config_.templates, stage_label(pc.checkpoints[i]), pc.stage_budgets[i].retrieval));
  }
  split_template_ = retrieval_template(config_.templates, "split", config_.fixed_split.retrieval);
  root_template_ = retrieval_template(config_.templates, "root", config_.root_branch_size);
}

namespace {

void fill_root_sets(TreeBuild& b, const RetrievedBranch* branch) {
  const auto kids = b.tree.children();
  for (int32_t c : kids[0]) {
    if (b.tree.origin[static_cast<size_t>(c)] == NodeOrigin::kDraft) b.root_draft_children.push_back(b.tree.tokens[static_cast<size_t>(c)]);
  }
  if (branch == nullptr) return;
  for (const RetrievedNode& n : branch->nodes) {
    if (n.parent == kRootParent) b.root_retrieved.push_back(n.token);
  }
}

HybridTree root_only(TokenId root, int32_t budget) {
  HybridTree t;
  t.tokens = {root};
  t.parents = {kRootParent};
  t.origin = {NodeOrigin::kDraft};
  t.depths = {0};
  t.scores = {0.0};
  t.budget = budget;
  return t;
}

}  // namespace

TreeBuild TreeBuilder::build(std::span<const TokenId> committed, const MarkovTableModel& draft,
                             const TransitionMatrix& matrix) const {
  if (committed.empty()) throw InputError("committed sequence must contain the root token");
  const PruneConfig& pc = config_.prune;
  const int32_t budget = pc.total_budget;
  const TokenId root = committed.back();
  TreeBuild b;
  std::optional<RetrievedBranch> branch;

  switch (config_.method) {
    case Method::kAutoregressive:
      b.tree = root_only(root, budget);
      break;
    case Method::kDense: {
      const DraftTree full = build_full_tree(committed, draft, pc);
      b.layers_expanded = full.num_layers() - 1;
      b.tree = from_draft(full, select_top_closed(full, budget), budget);
      break;
    }
    case Method::kPruneOnly:
    case Method::kGraft: {
      PruneDecision d = resolve_stage(committed, pc, draft);
      b.stage = d.stage;
      b.layers_expanded = d.layers_expanded;
      b.confidence_trace = d.confidence_trace;
      if (config_.method == Method::kGraft && d.pruned()) {
        const StageTemplate& t = stage_templates_[static_cast<size_t>(d.stage_index)];
        branch = instantiate(matrix, t, root);
        b.declared_retrieval = t.declared_size;
        b.tree = merge(d, *branch, budget);
      } else {
        b.tree = from_draft(d.tree, d.retained, budget);
      }
      break;
    }
    case Method::kFixedSplit: {
      const DraftTree full = build_full_tree(committed, draft, pc);
      b.layers_expanded = full.num_layers() - 1;
      branch = instantiate(matrix, split_template_, root);
      b.declared_retrieval = split_template_.declared_size;
      b.tree = merge(full, select_top_closed(full, config_.fixed_split.draft), *branch, budget);
      break;
    }
    case Method::kGraftRoot: {
      const DraftTree full = build_full_tree(committed, draft, pc);
      b.layers_expanded = full.num_layers() - 1;
      branch = instantiate(matrix, root_template_, root);
      b.declared_retrieval = root_template_.declared_size;
      b.tree = insert_root_variant(full, *branch, budget);
      break;
    }
    case Method::kGraftTail: {
      const DraftTree full = build_full_tree(committed, draft, pc);
      b.layers_expanded = full.num_layers() - 1;
      b.tree = insert_tail_variant(full, matrix, config_.tail_chain_length, budget);
      b.declared_retrieval = config_.tail_chain_length;
      b.realized_retrieval = b.tree.count(NodeOrigin::kRetrieved);
      b.grafted = config_.tail_chain_length > 0;
      break;
    }
  }
  if (branch) {
    b.grafted = true;
    b.realized_retrieval = branch->realized_count();
  }
  b.draft_nodes = b.tree.count(NodeOrigin::kDraft);
  fill_root_sets(b, branch ? &*branch : nullptr);
  return b;
}

TreeBuild build_next_tree(const DecodeConfig& config, std::span<const TokenId> committed,
                          const MarkovTableModel& draft, const TransitionMatrix& matrix) {
  return TreeBuilder(config).build(committed, draft, matrix);
}

double coverage_gain(const Distribution& target, std::span<const TokenId> draft_siblings,
                     std::span<const TokenId> retrieved) {
  const std::set<TokenId> s(draft_siblings.begin(), draft_siblings.end());
  const std::set<TokenId> r(retrieved.begin(), retrieved.end());
  double gain = 0.0;
  for (TokenId x : r) {
    if (!s.count(x)) gain += target[x];
  }
  return gain;
}

CostBreakdown step_cost(const CostModel& cost, Method method, const TreeBuild& build, int32_t prefix_len,
                        bool updates_enabled) {
  CostBreakdown c;
  if (method == Method::kAutoregressive) {
    c.verify = cost.t_ar;
    return c;
  }
  c.draft = cost.draft_layer_cost * build.layers_expanded;
  c.verify = cost.verify_base + cost.verify_per_node * build.tree.size() + cost.verify_context_coeff * prefix_len;
  c.rebuild = cost.rebuild_cost;
  c.posterior = cost.posterior_cost;
  c.kv_update = cost.kv_update_cost;
  if (uses_retrieval(method)) {
    c.merge = cost.merge_cost;
    if (build.grafted) c.retrieval = cost.retrieval_cost;
    if (updates_enabled) c.matrix_update = cost.update_cost;
  }
  return c;
}

DecodeReport compute_metrics(Method method, std::span<const StepRecord> steps, const CostModel& cost,
                             const PruneConfig& prune, std::span<const ReplayRecord> replay,
                             const DecodeReport* dense_reference) {
  DecodeReport r;
  r.method = method;
  r.steps = static_cast<int32_t>(steps.size());
  r.stage_histogram["none"] = 0;
  for (int32_t d : prune.checkpoints) r.stage_histogram[stage_label(d)] = 0;
  double fill_sum = 0.0;
  int32_t fill_n = 0;
  for (const StepRecord& s : steps) {
    r.tokens_emitted += s.committed;
    r.cost_by_category += s.cost;
    ++r.stage_histogram[stage_label(s.stage)];
    r.max_tree_size = std::max(r.max_tree_size, s.tree_size);
    if (s.coverage_gain) r.coverage_gain_samples.push_back(*s.coverage_gain);
    if (s.declared_retrieval > 0) {
      fill_sum += static_cast<double>(s.realized_retrieval) / s.declared_retrieval;
      ++fill_n;
    }
  }
  r.cost_total = r.cost_by_category.total();
  r.mat = r.steps > 0 ? static_cast<double>(r.tokens_emitted) / r.steps : 0.0;
  r.speedup_proxy = r.cost_total > 0.0 ? r.tokens_emitted * cost.t_ar / r.cost_total : 0.0;
  r.realized_retrieval_fill = fill_n > 0 ? fill_sum / fill_n : 0.0;

  if (!replay.empty()) {
    if (replay.size() != steps.size()) throw AnalysisError("dense replay has a different number of steps");
    double regret = 0.0;
    std::map<int32_t, std::pair<int32_t, int32_t>> harm;  // checkpoint -> (harmful, reached)
    for (size_t i = 0; i < steps.size(); ++i) {
      const StepRecord& s = steps[i];
      const ReplayRecord& d = replay[i];
      if (d.prefix_len != s.prefix_len || d.root != s.root) throw AnalysisError("dense replay prefix mismatch at step " + std::to_string(i));
      regret += d.accepted_len - s.accepted_len;
      for (const CheckpointConfidence& c : s.confidence_trace) {
        auto& [harmful, reached] = harm[c.checkpoint];
        ++reached;
        if (s.stage == c.checkpoint && d.accepted_len > c.layer) ++harmful;
      }
    }
    r.regret_estimate = steps.empty() ? 0.0 : regret / static_cast<double>(steps.size());
    for (int32_t d : prune.checkpoints) {
      const auto it = harm.find(d);
      const double rate = (it == harm.end() || it->second.second == 0)
                              ? 0.0
                              : static_cast<double>(it->second.first) / it->second.second;
      r.overpruning_rate_estimates[stage_label(d)] = rate;
    }
  }
  if (dense_reference != nullptr) attach_tradeoff(r, *dense_reference);
  return r;
}

void attach_tradeoff(DecodeReport& report, const DecodeReport& dense) {
  if (dense.steps == 0 || report.steps == 0 || dense.mat <= 0.0 || report.cost_total <= 0.0) {
    throw AnalysisError("tradeoff needs non-empty runs");
  }
  report.mat_loss = report.mat / dense.mat;
  report.latency_saving = (dense.cost_total / dense.steps) / (report.cost_total / report.steps);
  report.tradeoff_ratio = *report.mat_loss * *report.latency_saving;
}

namespace {

// Verified nodes off the accepted path first, then the root and the accepted
// path, so each row touched by the committed continuation ends up reflecting
// the context that was actually committed.
std::vector<NodeDistribution> update_order(const VerifyOutcome& outcome) {
  std::vector<char> on_path(outcome.node_dists.size(), 0);
  on_path[0] = 1;
  for (int32_t i : outcome.accepted_path) on_path[static_cast<size_t>(i)] = 1;
  std::vector<NodeDistribution> out;
  out.reserve(outcome.node_dists.size());
  for (size_t i = 0; i < outcome.node_dists.size(); ++i) {
    if (!on_path[i]) out.push_back(outcome.node_dists[i]);
  }
  out.push_back(outcome.node_dists[0]);
  for (int32_t i : outcome.accepted_path) out.push_back(outcome.node_dists[static_cast<size_t>(i)]);
  return out;
}

}  // namespace

SessionResult decode_session(const DecodeConfig& config, const MarkovTableModel& target,
                             const MarkovTableModel& draft, TransitionMatrix& matrix,
                             std::span<const TokenId> prompt) {
  config.validate();
  const int32_t vocab = target.vocab().size;
  if (draft.vocab().size != vocab) throw ConfigError("target and draft vocabularies differ");
  if (matrix.vocab_size() != vocab) throw ConfigError("matrix vocabulary differs from the target");
  if (matrix.k() != config.k) throw ConfigError("matrix k differs from the configured k");
  if (prompt.empty()) throw InputError("prompt must be non-empty");
  for (TokenId t : prompt) {
    if (!target.vocab().contains(t)) throw InputError("prompt token out of vocabulary range");
  }

  const bool updating = config.updates_enabled && uses_retrieval(config.method);
  const bool greedy = config.acceptance == Acceptance::kGreedy;
  std::vector<TokenId> committed(prompt.begin(), prompt.end());
  if (updating) {
    for (size_t i = 0; i < committed.size(); ++i) {
      const auto prefix = std::span<const TokenId>(committed).first(i + 1);
      matrix.update_row(committed[i], target.next_distribution(prefix));
    }
  }

  const TreeBuilder builder(config);
  std::optional<TreeBuilder> dense_builder;
  if (config.dense_replay && greedy) {
    DecodeConfig dc = config;
    dc.method = Method::kDense;
    dense_builder.emplace(dc);
  }
  Rng rng(mix_seed(config.seed, 0x76657269667931ULL));

  SessionResult result;
  int32_t generated = 0;
  bool ended = false;
  while (generated < config.max_new_tokens && !ended) {
    const TreeBuild b = builder.build(committed, draft, matrix);
    const int32_t prefix_len = static_cast<int32_t>(committed.size()) - 1;
    const VerificationPackage pkg = flatten(b.tree, prefix_len);
    const auto dists = node_distributions(target, committed, pkg);
    const VerifyOutcome outcome = greedy ? verify_greedy(pkg, dists) : verify_stochastic(pkg, dists, {}, rng);

    StepRecord s;
    s.step = static_cast<int32_t>(result.steps.size());
    s.prefix_len = prefix_len;
    s.root = committed.back();
    s.stage = b.stage;
    s.layers_expanded = b.layers_expanded;
    s.tree_size = b.tree.size();
    s.draft_nodes = b.draft_nodes;
    s.retrieved_nodes = b.tree.count(NodeOrigin::kRetrieved);
    s.declared_retrieval = b.declared_retrieval;
    s.realized_retrieval = b.realized_retrieval;
    s.accepted_len = outcome.accepted_len;
    s.emitted = static_cast<int32_t>(outcome.emitted_tokens.size());
    s.confidence_trace = b.confidence_trace;
    s.cost = step_cost(config.cost, config.method, b, prefix_len, config.updates_enabled);
    if (b.grafted && config.method != Method::kGraftTail) {
      s.coverage_gain = coverage_gain(*dists[0], b.root_draft_children, b.root_retrieved);
    }

    if (dense_builder) {
      const TreeBuild db = dense_builder->build(committed, draft, matrix);
      const VerificationPackage dpkg = flatten(db.tree, prefix_len);
      const VerifyOutcome dout = verify_greedy(dpkg, node_distributions(target, committed, dpkg));
      result.replay.push_back(ReplayRecord{prefix_len, s.root, dout.accepted_len, is_subtree(b.tree, db.tree)});
    }

    if (updating) matrix.update_from_verification(update_order(outcome));

    for (TokenId tok : outcome.emitted_tokens) {
      if (generated >= config.max_new_tokens) break;
      committed.push_back(tok);
      result.output.push_back(tok);
      ++generated;
      ++s.committed;
      if (config.end_token && tok == *config.end_token) {
        ended = true;
        break;
      }
    }
    result.steps.push_back(std::move(s));
  }
  result.report = compute_metrics(config.method, result.steps, config.cost, config.prune, result.replay);
  return result;
}

std::vector<TokenId> greedy_reference(const MarkovTableModel& target, std::span<const TokenId> prompt,
                                      int32_t max_new_tokens, std::optional<TokenId> end_token) {
  std::vector<TokenId> committed(prompt.begin(), prompt.end());
  std::vector<TokenId> out;
  for (int32_t i = 0; i < max_new_tokens; ++i) {
    const TokenId t = target.next_distribution(committed).argmax();
    committed.push_back(t);
    out.push_back(t);
    if (end_token && t == *end_token) break;
  }
  return out;
}

WarmupTranscript run_warmup(const DecodeConfig& config, const MarkovTableModel& target,
                            const MarkovTableModel& draft, TransitionMatrix& matrix,
                            std::span<const std::vector<TokenId>> prompts, int32_t rounds) {
  DecodeConfig wc = config;
  wc.updates_enabled = true;
  wc.dense_replay = false;
  if (!uses_retrieval(wc.method)) wc.method = Method::kGraft;
  auto session = [&](TransitionMatrix& m, std::span<const TokenId> prompt) {
    const SessionResult r = decode_session(wc, target, draft, m, prompt);
    WarmupRound round;
    round.steps = r.report.steps;
    for (const StepRecord& s : r.steps) {
      std::vector<double> trace;
      for (const CheckpointConfidence& c : s.confidence_trace) trace.push_back(c.confidence);
      round.confidence_traces.push_back(std::move(trace));
    }
    return round;
  };
  return warmup(matrix, session, prompts, rounds);
}

double calibration_objective(const DecodeConfig& config, const MarkovTableModel& target,
                             const MarkovTableModel& draft, const TransitionMatrix& matrix,
                             std::span<const std::vector<TokenId>> prompts) {
  if (prompts.empty()) throw ConfigError("calibration needs at least one prompt");
  double sum = 0.0;
  for (const auto& p : prompts) {
    TransitionMatrix m = matrix;
    sum += decode_session(config, target, draft, m, p).report.speedup_proxy;
  }
  return sum / static_cast<double>(prompts.size());
}

CalibrationResult calibrate(const DecodeConfig& config, const MarkovTableModel& target,
                            const MarkovTableModel& draft, const TransitionMatrix& matrix,
                            std::span<const std::vector<TokenId>> prompts,
                            const std::vector<std::vector<double>>& grid, int32_t sweeps) {
  if (prompts.empty()) throw ConfigError("calibration needs at least one prompt");
  if (grid.size() != config.prune.checkpoints.size()) throw ConfigError("calibration grid needs one list per checkpoint");
  std::vector<std::vector<double>> sorted = grid;
  for (auto& g : sorted) {
    if (g.empty()) throw ConfigError("calibration grid lists must be non-empty");
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
  }
  CalibrationResult result;
  std::map<std::vector<double>, double> memo;
  auto evaluate = [&](const std::vector<double>& tau) {
    if (auto it = memo.find(tau); it != memo.end()) return it->second;
    DecodeConfig c = config;
    c.prune.thresholds = tau;
    const double v = calibration_objective(c, target, draft, matrix, prompts);
    memo.emplace(tau, v);
    result.objective_trace.push_back(CalibrationPoint{tau, v});
    return v;
  };
  std::vector<double> best;
  for (const auto& g : sorted) best.push_back(g.front());
  double best_value = evaluate(best);
  for (int32_t sweep = 0; sweep < sweeps; ++sweep) {
    for (size_t i = 0; i < sorted.size(); ++i) {
      for (double v : sorted[i]) {
        std::vector<double> cand = best;
        cand[i] = v;
        const double value = evaluate(cand);
        if (value > best_value) {
          best_value = value;
          best = cand;
        }
      }
    }
  }
  result.thresholds = best;
  result.objective = best_value;
  return result;
}

}  // namespace hybridspec
