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

// Shared experiment plumbing: matrix preparation, calibration and the
// per-prompt decode loop used by the command line and the acceptance runner.

#pragma once

#include <optional>
#include <vector>

#include "hybridspec/analysis.h"
#include "hybridspec/config.h"
#include "hybridspec/report.h"

namespace hybridspec {

// Loads the configured snapshot, or warms a fresh matrix with the decode
// configuration. Saves it when a save path is configured.
TransitionMatrix prepare_matrix(const RunSetup& setup);

// Method whose thresholds calibration tunes: the configured one when it
// prunes at checkpoints, graft otherwise.
Method calibration_method(Method method);

// Calibrates on the warm-up prompts from `matrix`. The result is not applied.
CalibrationResult calibrate_setup(const RunSetup& setup, const TransitionMatrix& matrix);

// Calibrates when the setup asks for it, applies the thresholds and re-warms
// the matrix with them unless it was loaded from a snapshot.
std::optional<CalibrationResult> calibrate_and_apply(RunSetup& setup, TransitionMatrix& matrix);

// Decodes every evaluation prompt from its own copy of `matrix`. With
// dense_reference set, a dense run with the same seed is paired with each.
std::vector<RunEntry> run_decode(const RunSetup& setup, const TransitionMatrix& matrix, int32_t jobs = 1);

AblationFixture make_fixture(const RunSetup& setup);

}  // namespace hybridspec
