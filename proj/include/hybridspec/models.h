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

// Toy language models with exact, enumerable next-token distributions.
//
// A MarkovTableModel maps the last `order` tokens of a prefix to a stored
// Distribution and falls back to a fixed distribution for unseen contexts.
// Models are immutable after construction and may be shared freely across
// threads; all randomness is carried by an explicit Rng.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hybridspec/common.h"

namespace hybridspec {

struct VocabSpec {
  int32_t size = 0;
  // Optional display strings, one per id when present.
  std::vector<std::string> glyphs;

  void validate() const;
  bool contains(TokenId token) const { return token >= 0 && token < size; }
  std::string glyph(TokenId token) const;
};

inline constexpr double kNormTolerance = 1e-9;

// A normalized, non-negative probability vector over token ids.
class Distribution {
 public:
  Distribution() = default;
  // Validates non-negativity and |sum - 1| <= kNormTolerance.
  explicit Distribution(std::vector<double> probs);

  static Distribution uniform(int32_t size);
  static Distribution point_mass(int32_t size, TokenId token);
  // Divides by the total mass. Throws InputError if every weight is zero.
  static Distribution normalized(std::vector<double> weights);

  int32_t size() const { return static_cast<int32_t>(probs_.size()); }
  double operator[](TokenId token) const { return probs_[static_cast<size_t>(token)]; }
  std::span<const double> probs() const { return probs_; }

  // Highest-probability id, lowest id on ties.
  TokenId argmax() const;

  // The k most probable ids in descending probability, ascending id on ties.
  // With skip_zero, ids of zero mass are never returned.
  std::vector<TokenId> top_k(int32_t k, bool skip_zero = false) const;

  bool operator==(const Distribution& other) const = default;

 private:
  std::vector<double> probs_;
};

// A verified tree node paired with the target distribution over its
// successor. `dist` points into the owning model's table or into storage that
// outlives every consumer of this record.
struct NodeDistribution {
  TokenId token = 0;
  const Distribution* dist = nullptr;
};

// Checks the Distribution invariants on a raw vector without constructing.
bool is_normalized(std::span<const double> probs, double tol = kNormTolerance);

class MarkovTableModel {
 public:
  using Context = std::vector<TokenId>;

  MarkovTableModel(VocabSpec vocab, int32_t order, std::vector<Context> contexts,
                   std::vector<Distribution> rows, Distribution fallback, uint64_t seed);

  // Row for the last `order` tokens of `prefix`, or the fallback when the
  // context is absent (including prefixes shorter than `order`). Only the
  // tokens inside the context window are range-checked.
  const Distribution& next_distribution(std::span<const TokenId> prefix) const;

  // Stored row for an exact context, or nullptr.
  const Distribution* find(std::span<const TokenId> context) const;

  const VocabSpec& vocab() const { return vocab_; }
  int32_t order() const { return order_; }
  uint64_t seed() const { return seed_; }
  const Distribution& fallback() const { return fallback_; }
  // Contexts in ascending lexicographic order, parallel to rows().
  const std::vector<Context>& contexts() const { return contexts_; }
  const std::vector<Distribution>& rows() const { return rows_; }

 private:
  uint64_t encode(std::span<const TokenId> context) const;

  VocabSpec vocab_;
  int32_t order_ = 0;
  std::vector<Context> contexts_;
  std::vector<Distribution> rows_;
  Distribution fallback_;
  uint64_t seed_ = 0;
  std::unordered_map<uint64_t, uint32_t> index_;
};

// Dense random table: every context of length `order` gets a row whose
// weights are Exp(1) draws raised to `sharpness` (sharpness 1 is a symmetric
// Dirichlet(1) draw); floor(sparsity * size) entries are zeroed, then the
// row is renormalized. Contexts are generated in lexicographic order from a
// single mt19937_64 stream seeded with `seed`.
MarkovTableModel build_markov(const VocabSpec& vocab, int32_t order, uint64_t seed,
                              double sparsity, double sharpness = 1.0);

// Add-`smoothing` conditional estimates. Unseen contexts fall back to the
// add-`smoothing` unigram distribution of the corpus.
MarkovTableModel train_ngram(const VocabSpec& vocab, std::span<const TokenId> corpus,
                             int32_t order, double smoothing);

// Order-1 model with P(next = (t + 1) mod size | t) = 1.
MarkovTableModel det_cycle_model(int32_t size);
// Empty table, uniform fallback.
MarkovTableModel uniform_model(int32_t size);

enum class DerivationMode { kTemperatureSmooth, kUniformMix, kContextTruncate };

struct DraftDerivation {
  DerivationMode mode = DerivationMode::kUniformMix;
  double strength = 0.0;
  // Exponent scale for temperature smoothing: p^(1 / (1 + strength * scale)).
  double temperature_scale = 1.0;

  void validate() const;
};

std::string to_string(DerivationMode mode);
DerivationMode parse_derivation_mode(const std::string& name);

MarkovTableModel derive_draft(const MarkovTableModel& target, const DraftDerivation& derivation);

// Inverse-CDF draw over ascending ids.
TokenId sample(const Distribution& dist, Rng& rng);

// Last `window` tokens of committed ++ path (everything when shorter).
std::vector<TokenId> context_window(std::span<const TokenId> committed,
                                    std::span<const TokenId> path, size_t window);

}  // namespace hybridspec
