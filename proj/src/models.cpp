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

#include "hybridspec/models.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <utility>

namespace hybridspec {

namespace {

// Upper bound on rows materialized by build_markov.
constexpr uint64_t kMaxDenseRows = uint64_t{1} << 22;

std::vector<double> renormalize(std::vector<double> weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw InputError("cannot normalize an all-zero weight vector");
  for (double& w : weights) w /= total;
  return weights;
}

}  // namespace

void VocabSpec::validate() const {
  if (size < 2) throw ConfigError("vocabulary size must be at least 2");
  if (!glyphs.empty() && static_cast<int32_t>(glyphs.size()) != size) {
    throw ConfigError("glyph table must have exactly one entry per token id");
  }
}

std::string VocabSpec::glyph(TokenId token) const {
  if (!glyphs.empty() && contains(token)) return glyphs[static_cast<size_t>(token)];
  return std::to_string(token);
}

bool is_normalized(std::span<const double> probs, double tol) {
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) return false;
    total += p;
  }
  return std::abs(total - 1.0) <= tol;
}

Distribution::Distribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw InputError("distribution must be non-empty");
  if (!is_normalized(probs_)) throw InputError("distribution is not normalized or has negative mass");
}

Distribution Distribution::uniform(int32_t size) {
  if (size <= 0) throw InputError("uniform distribution needs a positive size");
  return Distribution(std::vector<double>(static_cast<size_t>(size), 1.0 / size));
}

Distribution Distribution::point_mass(int32_t size, TokenId token) {
  if (token < 0 || token >= size) throw InputError("point mass token out of range");
  std::vector<double> probs(static_cast<size_t>(size), 0.0);
  probs[static_cast<size_t>(token)] = 1.0;
  return Distribution(std::move(probs));
}

Distribution Distribution::normalized(std::vector<double> weights) {
  return Distribution(renormalize(std::move(weights)));
}

TokenId Distribution::argmax() const {
  TokenId best = 0;
  for (TokenId t = 1; t < size(); ++t) {
    if (probs_[static_cast<size_t>(t)] > probs_[static_cast<size_t>(best)]) best = t;
  }
  return best;
}

std::vector<TokenId> Distribution::top_k(int32_t k, bool skip_zero) const {
  std::vector<TokenId> ids;
  ids.reserve(probs_.size());
  for (TokenId t = 0; t < size(); ++t) {
    if (skip_zero && probs_[static_cast<size_t>(t)] <= 0.0) continue;
    ids.push_back(t);
  }
  const size_t take = std::min(ids.size(), static_cast<size_t>(std::max(k, 0)));
  auto better = [this](TokenId a, TokenId b) {
    const double pa = probs_[static_cast<size_t>(a)];
    const double pb = probs_[static_cast<size_t>(b)];
    return pa != pb ? pa > pb : a < b;
  };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take), ids.end(), better);
  ids.resize(take);
  return ids;
}

MarkovTableModel::MarkovTableModel(VocabSpec vocab, int32_t order, std::vector<Context> contexts,
                                   std::vector<Distribution> rows, Distribution fallback,
                                   uint64_t seed)
    : vocab_(std::move(vocab)),
      order_(order),
      contexts_(std::move(contexts)),
      rows_(std::move(rows)),
      fallback_(std::move(fallback)),
      seed_(seed) {
  vocab_.validate();
  if (order_ < 0) throw ConfigError("model order must be non-negative");
  if (contexts_.size() != rows_.size()) throw ConfigError("context and row counts differ");
  // Mixed-radix encoding of the context must fit in 63 bits.
  double bits = static_cast<double>(order_) * std::log2(static_cast<double>(vocab_.size));
  if (bits > 62.0) throw ConfigError("vocab^order is too large for this model representation");
  if (fallback_.size() != vocab_.size) throw ConfigError("fallback size does not match vocabulary");

  std::vector<size_t> perm(contexts_.size());
  std::iota(perm.begin(), perm.end(), size_t{0});
  std::sort(perm.begin(), perm.end(),
            [this](size_t a, size_t b) { return contexts_[a] < contexts_[b]; });
  std::vector<Context> sorted_ctx;
  std::vector<Distribution> sorted_rows;
  sorted_ctx.reserve(perm.size());
  sorted_rows.reserve(perm.size());
  for (size_t i : perm) {
    sorted_ctx.push_back(std::move(contexts_[i]));
    sorted_rows.push_back(std::move(rows_[i]));
  }
  contexts_ = std::move(sorted_ctx);
  rows_ = std::move(sorted_rows);

  index_.reserve(contexts_.size());
  for (size_t i = 0; i < contexts_.size(); ++i) {
    const Context& ctx = contexts_[i];
    if (static_cast<int32_t>(ctx.size()) != order_) throw ConfigError("context length must equal order");
    for (TokenId t : ctx) {
      if (!vocab_.contains(t)) throw ConfigError("context token out of vocabulary");
    }
    if (rows_[i].size() != vocab_.size) throw ConfigError("row size does not match vocabulary");
    if (!index_.emplace(encode(ctx), static_cast<uint32_t>(i)).second) {
      throw ConfigError("duplicate context in model table");
    }
  }
}

uint64_t MarkovTableModel::encode(std::span<const TokenId> context) const {
  uint64_t key = 0;
  for (TokenId t : context) key = key * static_cast<uint64_t>(vocab_.size) + static_cast<uint64_t>(t);
  return key;
}

const Distribution* MarkovTableModel::find(std::span<const TokenId> context) const {
  if (static_cast<int32_t>(context.size()) != order_) return nullptr;
  for (TokenId t : context) {
    if (!vocab_.contains(t)) throw InputError("token id " + std::to_string(t) + " outside vocabulary");
  }
  auto it = index_.find(encode(context));
  return it == index_.end() ? nullptr : &rows_[it->second];
}

const Distribution& MarkovTableModel::next_distribution(std::span<const TokenId> prefix) const {
  if (!prefix.empty() && !vocab_.contains(prefix.back())) {
    throw InputError("token id " + std::to_string(prefix.back()) + " outside vocabulary");
  }
  if (static_cast<int32_t>(prefix.size()) < order_) return fallback_;
  const Distribution* row = find(prefix.subspan(prefix.size() - static_cast<size_t>(order_)));
  return row != nullptr ? *row : fallback_;
}

MarkovTableModel build_markov(const VocabSpec& vocab, int32_t order, uint64_t seed,
                              double sparsity, double sharpness) {
  vocab.validate();
  if (order < 0) throw ConfigError("order must be non-negative");
  if (!(sparsity >= 0.0 && sparsity < 1.0)) throw ConfigError("sparsity must lie in [0, 1)");
  if (!(sharpness > 0.0)) throw ConfigError("sharpness must be positive");
  uint64_t n_rows = 1;
  for (int32_t i = 0; i < order; ++i) {
    n_rows *= static_cast<uint64_t>(vocab.size);
    if (n_rows > kMaxDenseRows) throw ConfigError("dense table too large; lower order or vocab");
  }

  const auto size = static_cast<size_t>(vocab.size);
  const size_t zeroed = std::min(size - 1, static_cast<size_t>(std::floor(sparsity * vocab.size)));
  Rng rng(seed);
  std::vector<MarkovTableModel::Context> contexts;
  std::vector<Distribution> rows;
  contexts.reserve(n_rows);
  rows.reserve(n_rows);
  MarkovTableModel::Context ctx(static_cast<size_t>(order), 0);
  for (uint64_t r = 0; r < n_rows; ++r) {
    std::vector<double> w(size);
    for (double& x : w) x = std::pow(-std::log1p(-rng.uniform()), sharpness);
    if (zeroed > 0) {
      std::vector<size_t> ids(size);
      std::iota(ids.begin(), ids.end(), size_t{0});
      for (size_t i = 0; i < zeroed; ++i) {
        const size_t j = i + static_cast<size_t>(rng.below(size - i));
        std::swap(ids[i], ids[j]);
        w[ids[i]] = 0.0;
      }
    }
    // A zero-mass row is only possible if every surviving draw underflowed.
    if (std::all_of(w.begin(), w.end(), [](double x) { return x <= 0.0; })) w[0] = 1.0;
    contexts.push_back(ctx);
    rows.push_back(Distribution::normalized(std::move(w)));
    for (int32_t pos = order - 1; pos >= 0; --pos) {
      if (++ctx[static_cast<size_t>(pos)] < vocab.size) break;
      ctx[static_cast<size_t>(pos)] = 0;
    }
  }
  return MarkovTableModel(vocab, order, std::move(contexts), std::move(rows),
                          Distribution::uniform(vocab.size), seed);
}

MarkovTableModel train_ngram(const VocabSpec& vocab, std::span<const TokenId> corpus,
                             int32_t order, double smoothing) {
  vocab.validate();
  if (corpus.empty()) throw InputError("corpus is empty");
  if (order < 0) throw ConfigError("order must be non-negative");
  if (static_cast<int64_t>(corpus.size()) <= order) throw InputError("corpus must be longer than the model order");
  if (!(smoothing >= 0.0)) throw ConfigError("smoothing must be non-negative");
  for (TokenId t : corpus) {
    if (!vocab.contains(t)) throw InputError("corpus token " + std::to_string(t) + " outside vocabulary");
  }

  const auto size = static_cast<size_t>(vocab.size);
  std::vector<double> unigram(size, 0.0);
  for (TokenId t : corpus) unigram[static_cast<size_t>(t)] += 1.0;
  std::vector<double> uni_w(size);
  for (size_t i = 0; i < size; ++i) uni_w[i] = unigram[i] + smoothing;
  Distribution fallback = Distribution::normalized(std::move(uni_w));

  std::map<MarkovTableModel::Context, std::vector<double>> counts;
  const auto ord = static_cast<size_t>(order);
  for (size_t i = ord; i < corpus.size(); ++i) {
    MarkovTableModel::Context ctx(corpus.begin() + static_cast<std::ptrdiff_t>(i - ord),
                                  corpus.begin() + static_cast<std::ptrdiff_t>(i));
    auto [it, inserted] = counts.try_emplace(std::move(ctx), size, 0.0);
    it->second[static_cast<size_t>(corpus[i])] += 1.0;
  }

  std::vector<MarkovTableModel::Context> contexts;
  std::vector<Distribution> rows;
  for (auto& [ctx, row] : counts) {
    for (double& c : row) c += smoothing;
    contexts.push_back(ctx);
    rows.push_back(Distribution::normalized(std::move(row)));
  }
  return MarkovTableModel(vocab, order, std::move(contexts), std::move(rows), std::move(fallback), 0);
}

MarkovTableModel det_cycle_model(int32_t size) {
  VocabSpec vocab{size, {}};
  std::vector<MarkovTableModel::Context> contexts;
  std::vector<Distribution> rows;
  for (TokenId t = 0; t < size; ++t) {
    contexts.push_back({t});
    rows.push_back(Distribution::point_mass(size, (t + 1) % size));
  }
  return MarkovTableModel(vocab, 1, std::move(contexts), std::move(rows),
                          Distribution::uniform(size), 0);
}

MarkovTableModel uniform_model(int32_t size) {
  return MarkovTableModel(VocabSpec{size, {}}, 0, {}, {}, Distribution::uniform(size), 0);
}

void DraftDerivation::validate() const {
  if (!(strength >= 0.0 && strength <= 1.0)) throw ConfigError("derivation strength must lie in [0, 1]");
  if (!(temperature_scale >= 0.0)) throw ConfigError("temperature scale must be non-negative");
}

std::string to_string(DerivationMode mode) {
  switch (mode) {
    case DerivationMode::kTemperatureSmooth:
      return "temperature-smooth";
    case DerivationMode::kUniformMix:
      return "uniform-mix";
    case DerivationMode::kContextTruncate:
      return "context-truncate";
  }
  return "unknown";
}

DerivationMode parse_derivation_mode(const std::string& name) {
  if (name == "temperature-smooth") return DerivationMode::kTemperatureSmooth;
  if (name == "uniform-mix") return DerivationMode::kUniformMix;
  if (name == "context-truncate") return DerivationMode::kContextTruncate;
  throw ConfigError("unknown draft derivation mode: " + name);
}

namespace {

Distribution transform_row(const Distribution& row, const DraftDerivation& d) {
  const auto probs = row.probs();
  std::vector<double> out(probs.begin(), probs.end());
  if (d.mode == DerivationMode::kTemperatureSmooth) {
    const double exponent = 1.0 / (1.0 + d.strength * d.temperature_scale);
    for (double& p : out) p = p > 0.0 ? std::pow(p, exponent) : 0.0;
    return Distribution::normalized(std::move(out));
  }
  const double u = 1.0 / static_cast<double>(out.size());
  for (double& p : out) p = (1.0 - d.strength) * p + d.strength * u;
  return Distribution(std::move(out));
}

}  // namespace

MarkovTableModel derive_draft(const MarkovTableModel& target, const DraftDerivation& derivation) {
  derivation.validate();
  if (derivation.mode != DerivationMode::kContextTruncate) {
    std::vector<Distribution> rows;
    rows.reserve(target.rows().size());
    for (const Distribution& row : target.rows()) rows.push_back(transform_row(row, derivation));
    return MarkovTableModel(target.vocab(), target.order(), target.contexts(), std::move(rows),
                            transform_row(target.fallback(), derivation), target.seed());
  }

  const int32_t drop = static_cast<int32_t>(std::lround(derivation.strength * target.order()));
  const int32_t new_order = target.order() - drop;
  if (drop == 0) return target;
  // Each shorter context takes the unweighted mean of the rows sharing it as
  // a suffix.
  std::map<MarkovTableModel::Context, std::pair<std::vector<double>, size_t>> pooled;
  const auto size = static_cast<size_t>(target.vocab().size);
  for (size_t i = 0; i < target.contexts().size(); ++i) {
    const auto& ctx = target.contexts()[i];
    MarkovTableModel::Context suffix(ctx.end() - new_order, ctx.end());
    auto [it, inserted] = pooled.try_emplace(std::move(suffix), std::vector<double>(size, 0.0), 0);
    const auto probs = target.rows()[i].probs();
    for (size_t t = 0; t < size; ++t) it->second.first[t] += probs[t];
    it->second.second += 1;
  }
  std::vector<MarkovTableModel::Context> contexts;
  std::vector<Distribution> rows;
  for (auto& [ctx, acc] : pooled) {
    contexts.push_back(ctx);
    rows.push_back(Distribution::normalized(std::move(acc.first)));
  }
  return MarkovTableModel(target.vocab(), new_order, std::move(contexts), std::move(rows),
                          target.fallback(), target.seed());
}

TokenId sample(const Distribution& dist, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  TokenId last_positive = 0;
  for (TokenId t = 0; t < dist.size(); ++t) {
    const double p = dist[t];
    if (p <= 0.0) continue;
    cum += p;
    last_positive = t;
    if (u < cum) return t;
  }
  // Rounding left u above the accumulated mass.
  return last_positive;
}

std::vector<TokenId> context_window(std::span<const TokenId> committed,
                                    std::span<const TokenId> path, size_t window) {
  const size_t total = committed.size() + path.size();
  const size_t keep = std::min(total, window);
  std::vector<TokenId> out;
  out.reserve(keep);
  const size_t skip = total - keep;
  if (skip < committed.size()) {
    out.insert(out.end(), committed.begin() + static_cast<std::ptrdiff_t>(skip), committed.end());
    out.insert(out.end(), path.begin(), path.end());
  } else {
    out.insert(out.end(), path.begin() + static_cast<std::ptrdiff_t>(skip - committed.size()), path.end());
  }
  return out;
}

}  // namespace hybridspec
