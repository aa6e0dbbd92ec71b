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

// Command-line front end. Verbs: decode, ablation, calibrate, theory,
// dump-templates and matrix {save,load,stats}.

#pragma once

#include <ostream>

namespace hybridspec {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;       // configuration, input or analysis error
inline constexpr int kExitUsage = 2;       // bad command line
inline constexpr int kExitCheckFailed = 3; // theory checks reported a violation

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hybridspec
