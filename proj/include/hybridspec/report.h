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

// JSON and CSV serialization of run results. Reports are written to a
// temporary file and renamed, so a failed run never leaves a partial file.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hybridspec/analysis.h"
#include "hybridspec/engine.h"

namespace hybridspec {

inline constexpr int kReportSchemaVersion = 1;

nlohmann::json to_json(const CostBreakdown& cost);
nlohmann::json to_json(const StepRecord& step);
nlohmann::json to_json(const DecodeReport& report);
nlohmann::json to_json(const CalibrationResult& result);
nlohmann::json to_json(const TheoryReport& report);
nlohmann::json to_json(const AblationReport& report);

// One decode run. `dense` is the paired dense run used for the tradeoff
// fields, when there is one.
struct RunEntry {
  Method method = Method::kGraft;
  uint64_t seed = 0;
  size_t prompt_index = 0;
  SessionResult result;
  std::optional<SessionResult> dense;
};
nlohmann::json to_json(const RunEntry& run);

// Metric definitions echoed into every report.
nlohmann::json conventions();

// Common report fields; `timestamp` is added only when requested.
nlohmann::json report_envelope(const std::string& command, const nlohmann::json& config,
                               const nlohmann::json& overrides, bool timestamp);

// One row per run: identifiers, MAT, proxy, tradeoff, fill and stage counts.
std::string runs_csv(const std::vector<RunEntry>& runs);
std::string ablation_csv(const AblationReport& report);

void write_text_atomic(const std::string& path, const std::string& text);
void write_json_atomic(const std::string& path, const nlohmann::json& doc);

// Metrics recomputed from serialized step records alone.
struct RecomputedMetrics {
  double mat = 0.0;
  double speedup_proxy = 0.0;
  std::optional<double> mat_loss;
  std::optional<double> latency_saving;
  std::optional<double> tradeoff_ratio;
};
RecomputedMetrics recompute_from_steps(const nlohmann::json& run, double t_ar);

}  // namespace hybridspec
