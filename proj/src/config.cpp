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

#include "hybridspec/config.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "hybridspec/corpus.h"

namespace hybridspec {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) throw ConfigError("missing key '" + std::string(key) + "' in " + where);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("key '" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  namespace fs = std::filesystem;
  const fs::path p(path);
  if (p.is_absolute() || base_dir.empty()) return p.string();
  return (fs::path(base_dir) / p).string();
}

std::string existing(const std::string& base_dir, const std::string& path, const std::string& what) {
  const std::string full = resolve(base_dir, path);
  if (!std::filesystem::is_regular_file(full)) throw ConfigError(what + " not found: " + full);
  return full;
}

struct Corpus {
  std::vector<TokenId> tokens;
  std::optional<WhitespaceVocab> words;
};

std::vector<TokenId> tokenize_prompt(const json& p, const std::string& tokenizer, const Corpus& corpus,
                                     const VocabSpec& vocab) {
  std::vector<TokenId> out;
  if (p.is_string()) {
    const auto text = p.get<std::string>();
    if (tokenizer == "byte") {
      out = tokenize_bytes(text);
    } else if (tokenizer == "whitespace" && corpus.words) {
      out = tokenize_whitespace(text, *corpus.words);
    } else {
      throw ConfigError("text prompts need the byte or whitespace tokenizer");
    }
  } else if (p.is_array()) {
    for (const auto& t : p) {
      if (!t.is_number_integer()) throw ConfigError("token prompts must hold integers");
      out.push_back(t.get<TokenId>());
    }
  } else {
    throw ConfigError("prompts.inline entries must be strings or integer arrays");
  }
  if (out.empty()) throw ConfigError("prompts must be non-empty");
  for (TokenId t : out) {
    if (!vocab.contains(t)) throw InputError("prompt token out of vocabulary range");
  }
  return out;
}

}  // namespace

json default_config() {
  return json::parse(R"({
    "vocab": {"tokenizer": "byte", "size": 256},
    "target": {"kind": "ngram", "corpus": "data/repetitive_50k.txt", "order": 2, "smoothing": 0.01,
               "seed": 42, "sparsity": 0.0, "sharpness": 1.0},
    "draft": {"mode": "uniform-mix", "strength": 0.4, "temperature_scale": 1.0},
    "prune": {"checkpoints": [0, 1, 5], "thresholds": [0.15, 0.13, 0.51],
              "stage_budgets": [[8, 52], [24, 36], [40, 20]], "total_budget": 60, "top_k": 10,
              "max_depth": 8, "beam_width": 10},
    "templates": {"source": "builtin"},
    "retrieval": {"k": 10, "warmup_rounds": 5, "updates_enabled": true},
    "cost": {"t_ar": 1.0, "draft_layer_cost": 0.18, "verify_base": 0.55, "verify_per_node": 0.004,
             "verify_context_coeff": 0.0, "retrieval_cost": 0.0, "merge_cost": 0.0005, "rebuild_cost": 0.0125,
             "update_cost": 0.007, "posterior_cost": 0.0, "kv_update_cost": 0.0},
    "method": "graft",
    "decode": {"max_new_tokens": 32, "acceptance": "greedy", "seed": 0, "end_token": null,
               "dense_replay": true, "dense_reference": true, "fixed_split": [24, 36],
               "root_branch_size": 20, "tail_chain_length": 8},
    "prompts": {"count": 30, "length": 8, "held_out_fraction": 0.2, "warmup_count": 50, "seed": 99},
    "calibration": {"enabled": true, "sweeps": 2,
                    "grid": [[0.01, 0.03, 0.05, 0.08, 0.1, 0.12, 0.15, 0.2, 0.3, 0.5],
                             [0.01, 0.03, 0.05, 0.08, 0.1, 0.12, 0.15, 0.2, 0.3, 0.5],
                             [0.01, 0.03, 0.05, 0.08, 0.1, 0.12, 0.15, 0.2, 0.3, 0.5]]},
    "output": {"dir": "out", "name": "run"}
  })");
}

RunSetup load_setup(const json& doc, const std::string& base_dir, const CliOverrides& overrides) {
  if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
  check_keys(doc, {"$comment", "vocab", "target", "draft", "prune", "templates", "retrieval", "cost", "method",
                   "decode", "prompts", "calibration", "output"},
             "configuration");
  json cfg = default_config();
  // Sections are merged one level deep so partial sections keep defaults.
  for (const auto& [key, value] : doc.items()) {
    if (key == "$comment") continue;
    if (value.is_object() && cfg[key].is_object()) {
      check_keys(value, [&] {
        std::set<std::string> keys;
        for (const auto& [k, v] : cfg[key].items()) keys.insert(k);
        if (key == "templates") keys.insert("file");
        if (key == "retrieval") keys.insert({"matrix_load", "matrix_save"});
        if (key == "prompts") keys.insert("inline");
        return keys;
      }(), key);
      for (const auto& [k, v] : value.items()) cfg[key][k] = v;
    } else {
      cfg[key] = value;
    }
  }

  RunSetup s;
  if (overrides.method) {
    cfg["method"] = *overrides.method;
    s.overrides["method"] = *overrides.method;
  }
  if (overrides.seed) {
    cfg["decode"]["seed"] = *overrides.seed;
    s.overrides["seed"] = *overrides.seed;
  }
  if (overrides.out_dir) {
    cfg["output"]["dir"] = *overrides.out_dir;
    s.overrides["out_dir"] = *overrides.out_dir;
  }

  // Models.
  const json& vj = cfg["vocab"];
  const auto tokenizer = get<std::string>(vj, "tokenizer", "vocab");
  const json& tj = cfg["target"];
  const auto kind = get<std::string>(tj, "kind", "target");
  Corpus corpus;
  if (kind == "ngram") {
    const std::string path = existing(base_dir, get<std::string>(tj, "corpus", "target"), "corpus file");
    if (tokenizer == "byte") {
      s.vocab = byte_vocab();
      corpus.tokens = tokenize_bytes(read_text_file(path));
    } else if (tokenizer == "whitespace") {
      const std::string text = read_text_file(path);
      corpus.words = build_whitespace_vocab(text);
      s.vocab = corpus.words->vocab;
      corpus.tokens = tokenize_whitespace(text, *corpus.words);
    } else if (tokenizer == "integer") {
      corpus.tokens = read_token_file(path);
      s.vocab.size = get<int32_t>(vj, "size", "vocab");
    } else {
      throw ConfigError("unknown tokenizer: " + tokenizer);
    }
    s.vocab.validate();
    s.target = std::make_unique<MarkovTableModel>(train_ngram(s.vocab, corpus.tokens, get<int32_t>(tj, "order", "target"),
                                                              get<double>(tj, "smoothing", "target")));
  } else {
    s.vocab.size = get<int32_t>(vj, "size", "vocab");
    s.vocab.validate();
    if (kind == "random") {
      s.target = std::make_unique<MarkovTableModel>(build_markov(s.vocab, get<int32_t>(tj, "order", "target"),
                                                                 get<uint64_t>(tj, "seed", "target"),
                                                                 get<double>(tj, "sparsity", "target"),
                                                                 get<double>(tj, "sharpness", "target")));
    } else if (kind == "det_cycle") {
      s.target = std::make_unique<MarkovTableModel>(det_cycle_model(s.vocab.size));
    } else if (kind == "uniform") {
      s.target = std::make_unique<MarkovTableModel>(uniform_model(s.vocab.size));
    } else {
      throw ConfigError("unknown target kind: " + kind);
    }
  }
  const json& dj = cfg["draft"];
  DraftDerivation derivation{parse_derivation_mode(get<std::string>(dj, "mode", "draft")),
                             get<double>(dj, "strength", "draft"), get<double>(dj, "temperature_scale", "draft")};
  derivation.validate();
  s.draft = std::make_unique<MarkovTableModel>(derive_draft(*s.target, derivation));

  // Decode configuration.
  DecodeConfig& d = s.decode;
  const json& pj = cfg["prune"];
  d.prune.checkpoints = get<std::vector<int32_t>>(pj, "checkpoints", "prune");
  d.prune.thresholds = get<std::vector<double>>(pj, "thresholds", "prune");
  d.prune.stage_budgets.clear();
  for (const auto& b : get<std::vector<std::vector<int32_t>>>(pj, "stage_budgets", "prune")) {
    if (b.size() != 2) throw ConfigError("prune.stage_budgets entries must be [draft, retrieval] pairs");
    d.prune.stage_budgets.push_back(StageBudget{b[0], b[1]});
  }
  d.prune.total_budget = get<int32_t>(pj, "total_budget", "prune");
  d.prune.top_k = get<int32_t>(pj, "top_k", "prune");
  d.prune.max_depth = get<int32_t>(pj, "max_depth", "prune");
  d.prune.beam_width = get<int32_t>(pj, "beam_width", "prune");

  const json& rj = cfg["retrieval"];
  d.k = get<int32_t>(rj, "k", "retrieval");
  d.warmup_rounds = get<int32_t>(rj, "warmup_rounds", "retrieval");
  d.updates_enabled = get<bool>(rj, "updates_enabled", "retrieval");
  if (rj.contains("matrix_load") && !rj["matrix_load"].is_null()) {
    s.matrix_load = existing(base_dir, rj["matrix_load"].get<std::string>(), "matrix snapshot");
  }
  if (rj.contains("matrix_save") && !rj["matrix_save"].is_null()) {
    s.matrix_save = resolve(base_dir, rj["matrix_save"].get<std::string>());
  }

  const json& tpl = cfg["templates"];
  const auto source = get<std::string>(tpl, "source", "templates");
  if (source == "file") {
    d.templates = load_templates(existing(base_dir, get<std::string>(tpl, "file", "templates"), "template file"), d.k);
  } else if (source != "builtin") {
    throw ConfigError("templates.source must be builtin or file");
  }

  const json& cj = cfg["cost"];
  CostModel& c = d.cost;
  c.t_ar = get<double>(cj, "t_ar", "cost");
  c.draft_layer_cost = get<double>(cj, "draft_layer_cost", "cost");
  c.verify_base = get<double>(cj, "verify_base", "cost");
  c.verify_per_node = get<double>(cj, "verify_per_node", "cost");
  c.verify_context_coeff = get<double>(cj, "verify_context_coeff", "cost");
  c.retrieval_cost = get<double>(cj, "retrieval_cost", "cost");
  c.merge_cost = get<double>(cj, "merge_cost", "cost");
  c.rebuild_cost = get<double>(cj, "rebuild_cost", "cost");
  c.update_cost = get<double>(cj, "update_cost", "cost");
  c.posterior_cost = get<double>(cj, "posterior_cost", "cost");
  c.kv_update_cost = get<double>(cj, "kv_update_cost", "cost");

  if (!cfg["method"].is_string()) throw ConfigError("method must be a string");
  d.method = parse_method(cfg["method"].get<std::string>());

  const json& ej = cfg["decode"];
  d.max_new_tokens = get<int32_t>(ej, "max_new_tokens", "decode");
  d.acceptance = parse_acceptance(get<std::string>(ej, "acceptance", "decode"));
  d.seed = get<uint64_t>(ej, "seed", "decode");
  if (!ej["end_token"].is_null()) d.end_token = get<TokenId>(ej, "end_token", "decode");
  d.dense_replay = get<bool>(ej, "dense_replay", "decode");
  s.dense_reference = get<bool>(ej, "dense_reference", "decode");
  const auto split = get<std::vector<int32_t>>(ej, "fixed_split", "decode");
  if (split.size() != 2) throw ConfigError("decode.fixed_split must be a [draft, retrieval] pair");
  d.fixed_split = StageBudget{split[0], split[1]};
  d.root_branch_size = get<int32_t>(ej, "root_branch_size", "decode");
  d.tail_chain_length = get<int32_t>(ej, "tail_chain_length", "decode");
  d.validate();

  // Prompts.
  const json& qj = cfg["prompts"];
  const auto count = get<int32_t>(qj, "count", "prompts");
  const auto length = get<int32_t>(qj, "length", "prompts");
  const auto held = get<double>(qj, "held_out_fraction", "prompts");
  const auto warm_count = get<int32_t>(qj, "warmup_count", "prompts");
  const auto pseed = get<uint64_t>(qj, "seed", "prompts");
  if (count < 0 || length < 1 || warm_count < 0 || !(held > 0.0 && held < 1.0)) {
    throw ConfigError("prompts: count >= 0, length >= 1, warmup_count >= 0, held_out_fraction in (0, 1)");
  }
  if (!corpus.tokens.empty()) {
    const size_t n = corpus.tokens.size();
    const auto held_n = static_cast<size_t>(static_cast<double>(n) * held);
    if (held_n <= static_cast<size_t>(length) || n - held_n <= static_cast<size_t>(length)) {
      throw ConfigError("corpus too short for the requested prompt length");
    }
    for (int32_t i = 0; i < warm_count; ++i) {
      Rng r(mix_seed(pseed, 1000000 + static_cast<uint64_t>(i)));
      const size_t off = n - held_n + r.below(held_n - static_cast<size_t>(length));
      s.warmup_prompts.emplace_back(corpus.tokens.begin() + static_cast<std::ptrdiff_t>(off),
                                    corpus.tokens.begin() + static_cast<std::ptrdiff_t>(off) + length);
    }
    for (int32_t i = 0; i < count; ++i) {
      Rng r(mix_seed(pseed, static_cast<uint64_t>(i)));
      const size_t off = r.below(n - held_n - static_cast<size_t>(length));
      s.eval_prompts.emplace_back(corpus.tokens.begin() + static_cast<std::ptrdiff_t>(off),
                                  corpus.tokens.begin() + static_cast<std::ptrdiff_t>(off) + length);
    }
  } else {
    auto random_prompt = [&](uint64_t stream) {
      Rng r(mix_seed(pseed, stream));
      std::vector<TokenId> p(static_cast<size_t>(length));
      for (auto& t : p) t = static_cast<TokenId>(r.below(static_cast<uint64_t>(s.vocab.size)));
      return p;
    };
    for (int32_t i = 0; i < warm_count; ++i) s.warmup_prompts.push_back(random_prompt(1000000 + static_cast<uint64_t>(i)));
    for (int32_t i = 0; i < count; ++i) s.eval_prompts.push_back(random_prompt(static_cast<uint64_t>(i)));
  }
  if (qj.contains("inline")) {
    if (!qj["inline"].is_array()) throw ConfigError("prompts.inline must be an array");
    s.eval_prompts.clear();
    for (const auto& p : qj["inline"]) s.eval_prompts.push_back(tokenize_prompt(p, tokenizer, corpus, s.vocab));
  }
  if (s.eval_prompts.empty()) throw ConfigError("configuration yields no evaluation prompts");
  for (size_t i = 0; i < s.eval_prompts.size(); ++i) s.seeds.push_back(d.seed + i);

  const json& kj = cfg["calibration"];
  s.calibrate_before_eval = get<bool>(kj, "enabled", "calibration");
  s.calibration_sweeps = get<int32_t>(kj, "sweeps", "calibration");
  s.calibration_grid = get<std::vector<std::vector<double>>>(kj, "grid", "calibration");
  if (s.calibration_grid.size() != d.prune.checkpoints.size()) {
    throw ConfigError("calibration.grid needs one candidate list per checkpoint");
  }
  for (const auto& g : s.calibration_grid) {
    if (g.empty()) throw ConfigError("calibration.grid lists must be non-empty");
    for (double t : g) {
      if (!(t > 0.0 && t < 1.0)) throw ConfigError("calibration thresholds must lie in (0, 1)");
    }
  }

  const json& oj = cfg["output"];
  s.out_dir = resolve("", get<std::string>(oj, "dir", "output"));
  s.run_name = get<std::string>(oj, "name", "output");
  s.config = std::move(cfg);
  return s;
}

RunSetup load_setup_file(const std::string& path, const CliOverrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
  }
  const auto base = std::filesystem::path(path).parent_path().string();
  return load_setup(doc, base, overrides);
}

}  // namespace hybridspec
