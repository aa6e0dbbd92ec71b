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

#include "hybridspec/verify.h"

#include <algorithm>

namespace hybridspec {

namespace {

std::vector<std::vector<int32_t>> child_lists(const VerificationPackage& pkg) {
  std::vector<std::vector<int32_t>> kids(pkg.tokens.size());
  for (size_t i = 1; i < pkg.tokens.size(); ++i) kids[static_cast<size_t>(pkg.parents[i])].push_back(static_cast<int32_t>(i));
  for (auto& k : kids) {
    std::stable_sort(k.begin(), k.end(), [&](int32_t a, int32_t b) {
      return pkg.tokens[static_cast<size_t>(a)] < pkg.tokens[static_cast<size_t>(b)];
    });
  }
  return kids;
}

void check_sizes(const VerificationPackage& pkg, std::span<const Distribution* const> dists) {
  if (pkg.tokens.empty()) throw StructuralError("verification package is empty");
  if (dists.size() != pkg.tokens.size()) throw StructuralError("one distribution per node is required");
}

std::vector<NodeDistribution> pair_up(const VerificationPackage& pkg, std::span<const Distribution* const> dists) {
  std::vector<NodeDistribution> out;
  out.reserve(pkg.tokens.size());
  for (size_t i = 0; i < pkg.tokens.size(); ++i) out.push_back(NodeDistribution{pkg.tokens[i], dists[i]});
  return out;
}

}  // namespace

std::vector<const Distribution*> node_distributions(const MarkovTableModel& target,
                                                    std::span<const TokenId> committed,
                                                    const VerificationPackage& package) {
  if (committed.empty()) throw InputError("committed sequence must contain the root token");
  if (package.tokens.empty() || package.tokens.front() != committed.back()) {
    throw StructuralError("package root differs from the last committed token");
  }
  const auto window = static_cast<size_t>(target.order());
  std::vector<const Distribution*> out(package.tokens.size(), nullptr);
  std::vector<TokenId> path;
  for (size_t i = 0; i < package.tokens.size(); ++i) {
    path.clear();
    for (int32_t j = static_cast<int32_t>(i); j > 0; j = package.parents[static_cast<size_t>(j)]) {
      path.push_back(package.tokens[static_cast<size_t>(j)]);
    }
    std::reverse(path.begin(), path.end());
    out[i] = &target.next_distribution(context_window(committed, path, window));
  }
  return out;
}

VerifyOutcome verify_greedy(const VerificationPackage& package, std::span<const Distribution* const> dists) {
  check_sizes(package, dists);
  const auto kids = child_lists(package);
  VerifyOutcome out;
  out.node_dists = pair_up(package, dists);
  int32_t cur = 0;
  for (;;) {
    const TokenId best = dists[static_cast<size_t>(cur)]->argmax();
    int32_t next = -1;
    for (int32_t c : kids[static_cast<size_t>(cur)]) {
      if (package.tokens[static_cast<size_t>(c)] == best) {
        next = c;
        break;
      }
    }
    out.emitted_tokens.push_back(best);
    if (next < 0) break;
    out.accepted_path.push_back(next);
    cur = next;
  }
  out.accepted_len = static_cast<int32_t>(out.accepted_path.size());
  return out;
}

VerifyOutcome verify_greedy(const MarkovTableModel& target, std::span<const TokenId> committed,
                            const VerificationPackage& package) {
  const auto dists = node_distributions(target, committed, package);
  return verify_greedy(package, dists);
}

VerifyOutcome verify_stochastic(const VerificationPackage& package, std::span<const Distribution* const> dists,
                                std::span<const Distribution* const> proposals, Rng& rng) {
  check_sizes(package, dists);
  if (!proposals.empty() && proposals.size() != package.tokens.size()) {
    throw StructuralError("proposals must be empty or one per node");
  }
  const auto kids = child_lists(package);
  VerifyOutcome out;
  out.node_dists = pair_up(package, dists);
  int32_t cur = 0;
  std::vector<double> residual;
  for (;;) {
    const auto p = dists[static_cast<size_t>(cur)]->probs();
    residual.assign(p.begin(), p.end());
    int32_t next = -1;
    for (int32_t c : kids[static_cast<size_t>(cur)]) {
      const auto x = static_cast<size_t>(package.tokens[static_cast<size_t>(c)]);
      const Distribution* q = proposals.empty() ? nullptr : proposals[static_cast<size_t>(c)];
      double accept = 0.0;
      if (q == nullptr) {
        accept = residual[x];
      } else if ((*q)[static_cast<TokenId>(x)] > 0.0) {
        accept = std::min(1.0, residual[x] / (*q)[static_cast<TokenId>(x)]);
      }
      if (rng.uniform() < accept) {
        next = c;
        break;
      }
      if (q == nullptr) {
        residual[x] = 0.0;
      } else {
        for (size_t t = 0; t < residual.size(); ++t) residual[t] = std::max(0.0, residual[t] - (*q)[static_cast<TokenId>(t)]);
      }
      double total = 0.0;
      for (double v : residual) total += v;
      if (!(total > 0.0)) throw AnalysisError("residual distribution vanished after a rejection");
      for (double& v : residual) v /= total;
    }
    if (next < 0) {
      out.emitted_tokens.push_back(sample(Distribution::normalized(residual), rng));
      break;
    }
    out.emitted_tokens.push_back(package.tokens[static_cast<size_t>(next)]);
    out.accepted_path.push_back(next);
    cur = next;
  }
  out.accepted_len = static_cast<int32_t>(out.accepted_path.size());
  return out;
}

VerifyOutcome verify_stochastic(const MarkovTableModel& target, std::span<const TokenId> committed,
                                const VerificationPackage& package,
                                std::span<const Distribution* const> proposals, Rng& rng) {
  const auto dists = node_distributions(target, committed, package);
  return verify_stochastic(package, dists, proposals, rng);
}

}  // namespace hybridspec
