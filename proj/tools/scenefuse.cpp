// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: dataset generation, training, evaluation, BEV
// rendering and the built-in self-test suites.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "scenefuse/config.hpp"
#include "scenefuse/error.hpp"
#include "scenefuse/harness.hpp"
#include "scenefuse/synthscene.hpp"
#include "scenefuse_test/suites.hpp"

namespace fs = std::filesystem;
using namespace scenefuse;

namespace {

// --config file first, then each --set key=value on top.
RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << text;
}

int cmd_generate(const std::string& config, const std::vector<std::string>& sets, const fs::path& out) {
  const RunConfig cfg = resolve_config(config, sets);
  const DatasetIndex index = generate_dataset(cfg.scene_spec(), cfg.num_scenes, cfg.num_val, out);
  std::vector<Scene> scenes;
  for (const auto& [name, split] : index.entries) scenes.push_back(read_scene(out / name));
  std::vector<const Scene*> ptrs;
  for (const Scene& s : scenes) ptrs.push_back(&s);
  const std::string stats = format_stats(scene_stats(ptrs));
  write_text(out / "stats.txt", stats);
  std::cout << "wrote " << index.entries.size() << " scenes to " << out.string() << "\n" << stats;
  return 0;
}

int cmd_train(const std::string& config, const std::vector<std::string>& sets, const std::string& data,
              const fs::path& out, const std::string& log_path) {
  RunConfig cfg = resolve_config(config, sets);
  if (!data.empty()) cfg.data = data;
  if (cfg.data.empty()) throw ConfigError("train: no dataset (--data or data = ...)");
  const std::vector<Scene> scenes = load_split(cfg.data, cfg.split);
  if (scenes.empty()) throw ConfigError("train: split '" + cfg.split + "' of '" + cfg.data + "' is empty");
  std::ostringstream log;
  std::cout << "training on " << scenes.size() << " scenes for " << cfg.steps << " steps\n";
  const TrainResult result = train(cfg, scenes, &std::cout);
  save_checkpoint(result.checkpoint, out);
  if (!log_path.empty()) {
    for (const LossRecord& r : result.log) log << format_loss_record(r) << "\n";
    write_text(log_path, log.str());
  }
  std::cout << "checkpoint written to " << out.string() << "\n";
  return 0;
}

int cmd_eval(const fs::path& ckpt_dir, const fs::path& data, const std::string& split, const fs::path& report,
             const std::string& predictions) {
  const Checkpoint ckpt = load_checkpoint(ckpt_dir);
  const EvalReport r = evaluate(ckpt, data, split);
  const std::string text = format_report(r);
  write_text(report, text);
  if (!predictions.empty()) {
    const std::vector<std::string> ids = read_index(data).scenes(split);
    const std::vector<Scene> scenes = load_split(data, split);
    write_text(predictions, format_predictions(predict(ckpt, scenes, ids)));
  }
  std::cout << text;
  return 0;
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

int cmd_render(const fs::path& ckpt_dir, const fs::path& scene_dir, const std::string& maps, const fs::path& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_dir);
  for (const fs::path& p : render_bev(ckpt, read_scene(scene_dir), split_list(maps), out))
    std::cout << p.string() << "\n";
  return 0;
}

int cmd_selftest(const std::string& suite, int seeds) {
  bool ok = true;
  auto report = [&](const selftest::SuiteReport& r) {
    std::cout << selftest::format_suite(r) << std::flush;
    ok = ok && r.passed();
  };
  if (suite == "all" || suite == "oracle") report(selftest::run_oracle_suite());
  if (suite == "all" || suite == "invariant") report(selftest::run_invariant_suite());
  if (suite == "all" || suite == "gradient") report(selftest::run_gradient_suite(seeds));
  std::cout << (ok ? "selftest passed" : "selftest FAILED") << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scenefuse: LiDAR-camera BEV detector on synthetic scenes"};
  app.require_subcommand(1);

  std::string config, data, split = "val", log_path, predictions, maps = "bf,bpf,bhatf,heatmap", suite = "all";
  std::string out, ckpt, report, scene;
  std::vector<std::string> sets;
  int seeds = 20;

  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset");
  gen->add_option("--config", config, "Run config file (key = value)")->check(CLI::ExistingFile);
  gen->add_option("--set", sets, "Config override key=value (repeatable)");
  gen->add_option("--out", out, "Dataset directory")->required();

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", config, "Run config file (key = value)")->check(CLI::ExistingFile);
  tr->add_option("--set", sets, "Config override key=value (repeatable)");
  tr->add_option("--data", data, "Dataset directory (overrides data = ...)");
  tr->add_option("--out", out, "Checkpoint directory")->required();
  tr->add_option("--log", log_path, "Also write every step's losses here");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint with BEV-IoU AP");
  ev->add_option("--ckpt", ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--split", split, "Split to evaluate")->capture_default_str();
  ev->add_option("--report", report, "Report file")->required();
  ev->add_option("--predictions", predictions, "Also write per-box predictions here");

  auto* rb = app.add_subcommand("render-bev", "Render BEV feature maps of one scene");
  rb->add_option("--ckpt", ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  rb->add_option("--scene", scene, "Scene directory")->required()->check(CLI::ExistingDirectory);
  rb->add_option("--maps", maps, "Comma-separated subset of bp,bi,bf,bpf,bhatf,heatmap,boxes")->capture_default_str();
  rb->add_option("--out", out, "Output directory")->required();

  auto* st = app.add_subcommand("selftest", "Run the oracle, invariant and gradient suites");
  st->add_option("--suite", suite, "all, oracle, invariant or gradient")
      ->check(CLI::IsMember({"all", "oracle", "invariant", "gradient"}))
      ->capture_default_str();
  st->add_option("--seeds", seeds, "Random seeds per gradient case")->check(CLI::PositiveNumber)->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_generate(config, sets, out);
    if (*tr) return cmd_train(config, sets, data, out, log_path);
    if (*ev) return cmd_eval(ckpt, data, split, report, predictions);
    if (*rb) return cmd_render(ckpt, scene, maps, out);
    if (*st) return cmd_selftest(suite, seeds);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
