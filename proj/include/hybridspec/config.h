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

// JSON run configuration. The layout is documented in docs/config.md; every
// object rejects keys it does not know.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hybridspec/engine.h"
#include "hybridspec/models.h"

namespace hybridspec {

struct RunSetup {
  nlohmann::json config;  // effective document, overrides applied
  nlohmann::json overrides = nlohmann::json::object();
  VocabSpec vocab;
  std::unique_ptr<MarkovTableModel> target;
  std::unique_ptr<MarkovTableModel> draft;
  DecodeConfig decode;
  std::vector<std::vector<TokenId>> eval_prompts;
  std::vector<std::vector<TokenId>> warmup_prompts;
  std::vector<uint64_t> seeds;  // one per eval prompt
  std::optional<std::string> matrix_load;
  std::optional<std::string> matrix_save;
  std::vector<std::vector<double>> calibration_grid;
  int32_t calibration_sweeps = 2;
  bool calibrate_before_eval = false;
  bool dense_reference = true;
  std::string out_dir = "out";
  std::string run_name = "run";
};

struct CliOverrides {
  std::optional<std::string> method;
  std::optional<uint64_t> seed;
  std::optional<std::string> out_dir;
};

nlohmann::json default_config();

// Parses and validates a configuration document. Relative paths resolve
// against `base_dir`. Throws ConfigError or InputError.
RunSetup load_setup(const nlohmann::json& doc, const std::string& base_dir, const CliOverrides& overrides = {});
RunSetup load_setup_file(const std::string& path, const CliOverrides& overrides = {});

}  // namespace hybridspec
