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

// Tree verification against the target model.
//
// The verification pass is simulated by querying the target once per node.
// Node i's distribution predicts the token after node i, conditioned on the
// committed sequence (which ends with the root) and the path down to i.

#pragma once

#include <span>
#include <vector>

#include "hybridspec/common.h"
#include "hybridspec/hybrid.h"
#include "hybridspec/models.h"

namespace hybridspec {

struct VerifyOutcome {
  std::vector<int32_t> accepted_path;  // node indices below the root
  std::vector<TokenId> emitted_tokens;  // accepted tokens then one bonus token
  std::vector<NodeDistribution> node_dists;  // every node, in package order
  int32_t accepted_len = 0;
};

// Pointers into the target model's storage, one per node.
std::vector<const Distribution*> node_distributions(const MarkovTableModel& target,
                                                    std::span<const TokenId> committed,
                                                    const VerificationPackage& package);

// Walks down from the root taking the child whose token is the target argmax.
VerifyOutcome verify_greedy(const MarkovTableModel& target, std::span<const TokenId> committed,
                            const VerificationPackage& package);
VerifyOutcome verify_greedy(const VerificationPackage& package, std::span<const Distribution* const> dists);

// Multi-candidate residual verification. Children are tried in ascending
// token order; a child with proposal Q is accepted with probability
// min(1, p_res(x) / Q(x)), and a rejection replaces p_res by
// normalize(max(0, p_res - Q)). `proposals` holds one entry per node; a null
// entry (or an empty span) means a point mass on the node's token, which is
// the proposal of every deterministically selected child. Pass a real Q only
// for children that were sampled from Q.
VerifyOutcome verify_stochastic(const MarkovTableModel& target, std::span<const TokenId> committed,
                                const VerificationPackage& package,
                                std::span<const Distribution* const> proposals, Rng& rng);
VerifyOutcome verify_stochastic(const VerificationPackage& package, std::span<const Distribution* const> dists,
                                std::span<const Distribution* const> proposals, Rng& rng);

}  // namespace hybridspec
