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

#include "hybridspec/runner.h"

namespace hybridspec {

TransitionMatrix prepare_matrix(const RunSetup& setup) {
  const DecodeConfig& c = setup.decode;
  TransitionMatrix m(setup.vocab.size, c.k);
  if (setup.matrix_load) {
    m = TransitionMatrix::load(*setup.matrix_load);
    if (m.vocab_size() != setup.vocab.size || m.k() != c.k) {
      throw ConfigError("matrix snapshot shape does not match the configuration");
    }
  } else if (c.warmup_rounds > 0) {
    if (setup.warmup_prompts.empty()) throw ConfigError("warm-up rounds requested without warm-up prompts");
    run_warmup(c, *setup.target, *setup.draft, m, setup.warmup_prompts, c.warmup_rounds);
  }
  if (setup.matrix_save) m.save(*setup.matrix_save);
  return m;
}

Method calibration_method(Method method) {
  return (method == Method::kPruneOnly || method == Method::kGraft) ? method : Method::kGraft;
}

CalibrationResult calibrate_setup(const RunSetup& setup, const TransitionMatrix& matrix) {
  if (setup.warmup_prompts.empty()) throw ConfigError("calibration needs warm-up prompts");
  DecodeConfig c = setup.decode;
  c.method = calibration_method(c.method);
  c.dense_replay = false;
  return calibrate(c, *setup.target, *setup.draft, matrix, setup.warmup_prompts, setup.calibration_grid,
                   setup.calibration_sweeps);
}

std::optional<CalibrationResult> calibrate_and_apply(RunSetup& s, TransitionMatrix& matrix) {
  if (!s.calibrate_before_eval) return std::nullopt;
  CalibrationResult cal = calibrate_setup(s, matrix);
  s.decode.prune.thresholds = cal.thresholds;
  s.config["prune"]["thresholds"] = cal.thresholds;
  if (!s.matrix_load) matrix = prepare_matrix(s);
  return cal;
}

std::vector<RunEntry> run_decode(const RunSetup& setup, const TransitionMatrix& matrix, int32_t jobs) {
  std::vector<RunEntry> runs(setup.eval_prompts.size());
  parallel_for(runs.size(), jobs, [&](size_t i) {
    DecodeConfig c = setup.decode;
    c.seed = setup.seeds[i];
    RunEntry& run = runs[i];
    run.method = c.method;
    run.seed = c.seed;
    run.prompt_index = i;
    TransitionMatrix m = matrix;
    run.result = decode_session(c, *setup.target, *setup.draft, m, setup.eval_prompts[i]);
    if (setup.dense_reference) {
      DecodeConfig d = c;
      d.method = Method::kDense;
      TransitionMatrix md = matrix;
      run.dense = decode_session(d, *setup.target, *setup.draft, md, setup.eval_prompts[i]);
      attach_tradeoff(run.result.report, run.dense->report);
    }
  });
  return runs;
}

AblationFixture make_fixture(const RunSetup& setup) {
  AblationFixture f;
  f.target = setup.target.get();
  f.draft = setup.draft.get();
  f.warmup_prompts = setup.warmup_prompts;
  f.eval_prompts = setup.eval_prompts;
  f.seeds = setup.seeds;
  f.base = setup.decode;
  return f;
}

}  // namespace hybridspec
