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

#include "hybridspec/cli.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "hybridspec/runner.h"

namespace hybridspec {

using nlohmann::json;

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<uint64_t> seed;
  int32_t jobs = 1;
  std::optional<std::string> out_dir;
  std::optional<std::string> method;
  bool timestamps = false;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

RunSetup load(const GlobalOptions& g) {
  CliOverrides o;
  o.method = g.method;
  o.seed = g.seed;
  o.out_dir = g.out_dir;
  if (!o.out_dir) {
    if (const char* env = std::getenv("HYBRIDSPEC_OUT_DIR"); env != nullptr && *env != '\0') o.out_dir = env;
  }
  if (g.config.empty()) return load_setup(json::object(), "", o);
  return load_setup_file(g.config, o);
}

std::string out_path(const RunSetup& s, const std::string& suffix) {
  return (std::filesystem::path(s.out_dir) / (s.run_name + suffix)).string();
}

json matrix_stats(const TransitionMatrix& m) {
  int64_t valid = 0;
  for (TokenId t = 0; t < m.vocab_size(); ++t) valid += m.valid_count(t);
  return json{{"vocab_size", m.vocab_size()},   {"k", m.k()},
              {"touched_rows", m.touched_rows()}, {"valid_entries", valid},
              {"storage_bytes", m.storage_bytes()}, {"touched_bytes", m.touched_bytes()}};
}

void print_stats(const json& stats, std::ostream& out) {
  for (const char* key : {"vocab_size", "k", "touched_rows", "valid_entries", "storage_bytes", "touched_bytes"}) {
    out << key << " " << stats.at(key).dump() << "\n";
  }
}

int cmd_decode(const GlobalOptions& g, std::ostream& out) {
  RunSetup s = load(g);
  TransitionMatrix matrix = prepare_matrix(s);
  const auto cal = calibrate_and_apply(s, matrix);
  const std::vector<RunEntry> runs = run_decode(s, matrix, g.jobs);

  json doc = report_envelope("decode", s.config, s.overrides, g.timestamps);
  doc["calibration"] = cal ? to_json(*cal) : json(nullptr);
  doc["matrix"] = matrix_stats(matrix);
  doc["runs"] = json::array();
  double mat = 0.0;
  double proxy = 0.0;
  for (const RunEntry& r : runs) {
    doc["runs"].push_back(to_json(r));
    mat += r.result.report.mat;
    proxy += r.result.report.speedup_proxy;
  }
  const double n = static_cast<double>(runs.size());
  doc["summary"] = {{"runs", runs.size()}, {"mean_mat", mat / n}, {"mean_speedup_proxy", proxy / n}};
  write_json_atomic(out_path(s, ".json"), doc);
  write_text_atomic(out_path(s, ".csv"), runs_csv(runs));
  out << "method " << to_string(s.decode.method) << " runs " << runs.size() << " mean_mat " << fmt(mat / n)
      << " mean_proxy " << fmt(proxy / n) << "\n";
  return kExitOk;
}

int cmd_ablation(const GlobalOptions& g, const std::string& suite, std::ostream& out) {
  RunSetup s = load(g);
  TransitionMatrix matrix = prepare_matrix(s);
  const auto cal = calibrate_and_apply(s, matrix);
  const AblationReport report = run_ablation(suite, make_fixture(s), g.jobs);

  json doc = report_envelope("ablation", s.config, s.overrides, g.timestamps);
  doc["calibration"] = cal ? to_json(*cal) : json(nullptr);
  doc["ablation"] = to_json(report);
  write_json_atomic(out_path(s, ".ablation-" + suite + ".json"), doc);
  write_text_atomic(out_path(s, ".ablation-" + suite + ".csv"), ablation_csv(report));
  for (const AblationRow& row : report.rows) {
    out << suite << " " << row.label << " mat " << fmt(row.mean_mat) << " proxy " << fmt(row.mean_proxy) << "\n";
  }
  return kExitOk;
}

int cmd_calibrate(const GlobalOptions& g, std::ostream& out) {
  RunSetup s = load(g);
  const TransitionMatrix matrix = prepare_matrix(s);
  const CalibrationResult cal = calibrate_setup(s, matrix);
  json doc = report_envelope("calibrate", s.config, s.overrides, g.timestamps);
  doc["calibration"] = to_json(cal);
  write_json_atomic(out_path(s, ".calibration.json"), doc);
  out << "thresholds";
  for (double t : cal.thresholds) out << " " << t;
  out << " objective " << fmt(cal.objective) << "\n";
  return kExitOk;
}

int cmd_theory(const GlobalOptions& g, int32_t n_seeds, double scale, std::ostream& out) {
  if (n_seeds < 1) throw ConfigError("--seeds must be positive");
  if (!(scale > 0.0 && scale <= 1.0)) throw ConfigError("--scale must lie in (0, 1]");
  std::vector<uint64_t> seeds(static_cast<size_t>(n_seeds));
  std::iota(seeds.begin(), seeds.end(), g.seed.value_or(0));
  TheoryOptions opt;
  auto scaled = [&](int64_t v) { return std::max<int64_t>(1, static_cast<int64_t>(static_cast<double>(v) * scale)); };
  opt.subset_pairs = scaled(opt.subset_pairs);
  opt.graft_pairs = scaled(opt.graft_pairs);
  opt.frontiers = scaled(opt.frontiers);
  opt.overprune_trials = scaled(opt.overprune_trials);
  const TheoryReport report = theory_checks(seeds, opt);

  std::string out_dir = "out";
  if (g.out_dir) {
    out_dir = *g.out_dir;
  } else if (const char* env = std::getenv("HYBRIDSPEC_OUT_DIR"); env != nullptr && *env != '\0') {
    out_dir = env;
  }
  json overrides = json::object();
  overrides["seeds"] = n_seeds;
  overrides["scale"] = scale;
  if (g.seed) overrides["seed"] = *g.seed;
  json doc = report_envelope("theory", json::object(), overrides, g.timestamps);
  doc["theory"] = to_json(report);
  write_json_atomic((std::filesystem::path(out_dir) / "theory.json").string(), doc);
  for (const PropertyResult& p : report.properties) {
    out << (p.passed ? "PASS " : "FAIL ") << p.name << " instances " << p.instances << " violations "
        << p.violations << " measured " << fmt(p.measured) << " expected " << fmt(p.expected) << "\n";
  }
  return report.all_passed() ? kExitOk : kExitCheckFailed;
}

int cmd_dump_templates(int32_t k, bool as_json, std::ostream& out) {
  const TemplateSet set = builtin_templates(k);
  if (as_json) {
    json doc;
    doc["templates"] = json::array();
    for (const auto& [stage, t] : set) {
      json nodes = json::array();
      for (const TemplateNode& n : t.nodes) nodes.push_back({{"parent", n.parent}, {"rank", n.rank}});
      doc["templates"].push_back({{"stage", stage}, {"declared_size", t.declared_size}, {"nodes", nodes}});
    }
    out << doc.dump(2) << "\n";
    return kExitOk;
  }
  out << "stage size max_depth max_rank depth_counts\n";
  for (const auto& [stage, t] : set) {
    out << stage << " " << t.nodes.size() << " " << t.max_depth() << " " << t.max_rank() << " ";
    const auto counts = t.depth_counts();
    for (size_t i = 0; i < counts.size(); ++i) out << (i ? "," : "") << counts[i];
    out << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hybrid draft-tree speculative decoding on table models"};
  app.name("hybridspec");
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Base seed (decode seeds are seed + prompt index)");
  app.add_option("--jobs", g.jobs, "Worker threads; results do not depend on it")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", g.out_dir, "Report directory (default HYBRIDSPEC_OUT_DIR, then the config)");
  app.add_option("--method", g.method, "Override the decoding method");
  app.add_flag("--timestamps", g.timestamps, "Add a timestamp to reports");

  auto* decode = app.add_subcommand("decode", "Decode every evaluation prompt and write a report");
  decode->fallthrough();

  std::string suite;
  auto* ablation = app.add_subcommand("ablation", "Run an ablation suite");
  ablation->add_option("suite", suite, "component, warmup, template-depth, template-width or temperature")
      ->required()
      ->check(CLI::IsMember(ablation_suites()));
  ablation->fallthrough();

  auto* calibrate_cmd = app.add_subcommand("calibrate", "Search checkpoint thresholds on the warm-up prompts");
  calibrate_cmd->fallthrough();

  int32_t n_seeds = 1;
  double scale = 1.0;
  auto* theory = app.add_subcommand("theory", "Randomized property checks");
  theory->add_option("--seeds", n_seeds, "Number of seeds");
  theory->add_option("--scale", scale, "Fraction of the default instance counts");
  theory->fallthrough();

  int32_t k = 10;
  bool as_json = false;
  auto* dump = app.add_subcommand("dump-templates", "Print the builtin retrieval templates");
  dump->add_option("k", k, "Successors per matrix row")->check(CLI::PositiveNumber);
  dump->add_flag("--json", as_json, "Print the full node lists as JSON");
  dump->fallthrough();

  std::string matrix_path;
  auto* matrix = app.add_subcommand("matrix", "Transition matrix snapshots");
  matrix->require_subcommand(1);
  matrix->fallthrough();
  auto* msave = matrix->add_subcommand("save", "Warm a matrix from the configuration and save it");
  msave->add_option("path", matrix_path)->required();
  msave->fallthrough();
  auto* mload = matrix->add_subcommand("load", "Load a snapshot and print its statistics");
  mload->add_option("path", matrix_path)->required()->check(CLI::ExistingFile);
  mload->fallthrough();
  auto* mstats = matrix->add_subcommand("stats", "Warm a matrix from the configuration and print statistics");
  mstats->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (decode->parsed()) return cmd_decode(g, out);
    if (ablation->parsed()) return cmd_ablation(g, suite, out);
    if (calibrate_cmd->parsed()) return cmd_calibrate(g, out);
    if (theory->parsed()) return cmd_theory(g, n_seeds, scale, out);
    if (dump->parsed()) return cmd_dump_templates(k, as_json, out);
    if (msave->parsed()) {
      RunSetup s = load(g);
      const TransitionMatrix m = prepare_matrix(s);
      m.save(matrix_path);
      print_stats(matrix_stats(m), out);
      return kExitOk;
    }
    if (mload->parsed()) {
      print_stats(matrix_stats(TransitionMatrix::load(matrix_path)), out);
      return kExitOk;
    }
    if (mstats->parsed()) {
      RunSetup s = load(g);
      print_stats(matrix_stats(prepare_matrix(s)), out);
      return kExitOk;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  err << "error: no command\n";
  return kExitUsage;
}

}  // namespace hybridspec
