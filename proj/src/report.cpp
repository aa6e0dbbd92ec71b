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

#include "hybridspec/report.h"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace hybridspec {

using nlohmann::json;

namespace {

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

}  // namespace

json to_json(const CostBreakdown& c) {
  return json{{"draft", c.draft},         {"merge", c.merge},
              {"rebuild", c.rebuild},     {"verify", c.verify},
              {"retrieval", c.retrieval}, {"matrix_update", c.matrix_update},
              {"posterior", c.posterior}, {"kv_update", c.kv_update},
              {"total", c.total()}};
}

json to_json(const StepRecord& s) {
  json trace = json::array();
  for (const auto& c : s.confidence_trace) {
    trace.push_back({{"checkpoint", c.checkpoint}, {"layer", c.layer}, {"confidence", c.confidence}, {"passed", c.passed}});
  }
  return json{{"step", s.step},
              {"prefix_len", s.prefix_len},
              {"root", s.root},
              {"stage", stage_label(s.stage)},
              {"layers_expanded", s.layers_expanded},
              {"tree_size", s.tree_size},
              {"draft_nodes", s.draft_nodes},
              {"retrieved_nodes", s.retrieved_nodes},
              {"declared_retrieval", s.declared_retrieval},
              {"realized_retrieval", s.realized_retrieval},
              {"accepted_len", s.accepted_len},
              {"emitted", s.emitted},
              {"committed", s.committed},
              {"cost", to_json(s.cost)},
              {"coverage_gain", optional_json(s.coverage_gain)},
              {"confidence_trace", std::move(trace)}};
}

json to_json(const DecodeReport& r) {
  return json{{"method", to_string(r.method)},
              {"steps", r.steps},
              {"tokens_emitted", r.tokens_emitted},
              {"mat", r.mat},
              {"cost_total", r.cost_total},
              {"cost_by_category", to_json(r.cost_by_category)},
              {"speedup_proxy", r.speedup_proxy},
              {"mat_loss", optional_json(r.mat_loss)},
              {"latency_saving", optional_json(r.latency_saving)},
              {"tradeoff_ratio", optional_json(r.tradeoff_ratio)},
              {"regret_estimate", optional_json(r.regret_estimate)},
              {"overpruning_rate_estimates", r.overpruning_rate_estimates},
              {"coverage_gain_samples", r.coverage_gain_samples},
              {"realized_retrieval_fill", r.realized_retrieval_fill},
              {"stage_histogram", r.stage_histogram},
              {"max_tree_size", r.max_tree_size}};
}

json to_json(const CalibrationResult& r) {
  json trace = json::array();
  for (const auto& p : r.objective_trace) trace.push_back({{"thresholds", p.thresholds}, {"objective", p.objective}});
  return json{{"thresholds", r.thresholds}, {"objective", r.objective}, {"objective_trace", std::move(trace)}};
}

json to_json(const TheoryReport& r) {
  json props = json::array();
  for (const auto& p : r.properties) {
    props.push_back({{"name", p.name},
                     {"instances", p.instances},
                     {"violations", p.violations},
                     {"measured", p.measured},
                     {"expected", p.expected},
                     {"tolerance", p.tolerance},
                     {"passed", p.passed}});
  }
  return json{{"properties", std::move(props)}, {"all_passed", r.all_passed()}};
}

json to_json(const AblationReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    json seeds = json::array();
    for (const auto& rep : row.per_seed) seeds.push_back(to_json(rep));
    rows.push_back({{"label", row.label},
                    {"method", to_string(row.config.method)},
                    {"acceptance", to_string(row.config.acceptance)},
                    {"warmup_rounds", row.config.warmup_rounds},
                    {"thresholds", row.config.prune.thresholds},
                    {"mean_mat", row.mean_mat},
                    {"mean_proxy", row.mean_proxy},
                    {"per_seed", std::move(seeds)}});
  }
  return json{{"suite", r.suite}, {"rows", std::move(rows)}};
}

json to_json(const RunEntry& run) {
  json steps = json::array();
  for (const auto& s : run.result.steps) steps.push_back(to_json(s));
  json out{{"method", to_string(run.method)},
           {"seed", run.seed},
           {"prompt_index", run.prompt_index},
           {"output", run.result.output},
           {"steps", std::move(steps)},
           {"report", to_json(run.result.report)},
           {"reference_steps", nullptr}};
  if (run.dense) {
    json ref = json::array();
    for (const auto& s : run.dense->steps) ref.push_back(to_json(s));
    out["reference_steps"] = std::move(ref);
  }
  return out;
}

json conventions() {
  return json{
      {"mat", "committed tokens per decoding step, bonus token included, last step truncated at max_new_tokens"},
      {"speedup_proxy", "tokens_emitted * t_ar / cost_total"},
      {"mat_loss", "mat / mat of the paired dense run"},
      {"latency_saving", "(dense cost per step) / (cost per step)"},
      {"tradeoff_ratio", "mat_loss * latency_saving"},
      {"tree_size", "node count including the root"},
      {"stage", "checkpoint depth at which the draft tree was pruned, or none"},
      {"regret_estimate", "mean over steps of dense accepted length minus method accepted length"},
      {"overpruning_rate", "share of steps reaching a checkpoint that pruned there while dense accepted deeper"}};
}

json report_envelope(const std::string& command, const json& config, const json& overrides, bool timestamp) {
  json doc{{"schema_version", kReportSchemaVersion},
           {"command", command},
           {"config", config},
           {"overrides", overrides},
           {"conventions", conventions()}};
  if (timestamp) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    doc["timestamp"] = buf;
  }
  return doc;
}

std::string runs_csv(const std::vector<RunEntry>& runs) {
  std::ostringstream out;
  std::vector<std::string> stages;
  if (!runs.empty()) {
    for (const auto& [k, v] : runs.front().result.report.stage_histogram) stages.push_back(k);
  }
  out << "method,seed,prompt_index,steps,tokens_emitted,mat,speedup_proxy,cost_total,mat_loss,latency_saving,"
         "tradeoff_ratio,realized_retrieval_fill,max_tree_size";
  for (const auto& s : stages) out << ",stage_" << s;
  out << "\n";
  for (const auto& run : runs) {
    const DecodeReport& r = run.result.report;
    out << to_string(run.method) << ',' << run.seed << ',' << run.prompt_index << ',' << r.steps << ','
        << r.tokens_emitted << ',' << num(r.mat) << ',' << num(r.speedup_proxy) << ',' << num(r.cost_total) << ','
        << opt_num(r.mat_loss) << ',' << opt_num(r.latency_saving) << ',' << opt_num(r.tradeoff_ratio) << ','
        << num(r.realized_retrieval_fill) << ',' << r.max_tree_size;
    for (const auto& s : stages) {
      const auto it = r.stage_histogram.find(s);
      out << ',' << (it == r.stage_histogram.end() ? 0 : it->second);
    }
    out << "\n";
  }
  return out.str();
}

std::string ablation_csv(const AblationReport& report) {
  std::ostringstream out;
  out << "suite,label,method,acceptance,warmup_rounds,seeds,mean_mat,mean_proxy\n";
  for (const auto& row : report.rows) {
    out << report.suite << ',' << row.label << ',' << to_string(row.config.method) << ','
        << to_string(row.config.acceptance) << ',' << row.config.warmup_rounds << ',' << row.per_seed.size() << ','
        << num(row.mean_mat) << ',' << num(row.mean_proxy) << "\n";
  }
  return out.str();
}

void write_text_atomic(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out << text;
    if (!out) throw InputError("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

void write_json_atomic(const std::string& path, const json& doc) { write_text_atomic(path, doc.dump(2) + "\n"); }

RecomputedMetrics recompute_from_steps(const json& run, double t_ar) {
  auto totals = [](const json& steps) {
    double tokens = 0.0;
    double cost = 0.0;
    for (const auto& s : steps) {
      tokens += s.at("committed").get<double>();
      const json& c = s.at("cost");
      for (const char* key : {"draft", "merge", "rebuild", "verify", "retrieval", "matrix_update", "posterior", "kv_update"}) {
        cost += c.at(key).get<double>();
      }
    }
    return std::pair{tokens, cost};
  };
  const json& steps = run.at("steps");
  if (steps.empty()) throw AnalysisError("run has no step records");
  const auto [tokens, cost] = totals(steps);
  const double n = static_cast<double>(steps.size());
  RecomputedMetrics m;
  m.mat = tokens / n;
  m.speedup_proxy = tokens * t_ar / cost;
  const json& ref = run.at("reference_steps");
  if (!ref.is_null()) {
    if (ref.empty()) throw AnalysisError("reference run has no step records");
    const auto [ref_tokens, ref_cost] = totals(ref);
    const double rn = static_cast<double>(ref.size());
    m.mat_loss = m.mat / (ref_tokens / rn);
    m.latency_saving = (ref_cost / rn) / (cost / n);
    m.tradeoff_ratio = *m.mat_loss * *m.latency_saving;
  }
  return m;
}

}  // namespace hybridspec
