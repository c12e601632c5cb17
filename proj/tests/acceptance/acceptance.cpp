// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <unistd.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scenefuse/container.hpp"
#include "scenefuse/error.hpp"
#include "scenefuse/harness.hpp"
#include "scenefuse/model.hpp"
#include "scenefuse/synthscene.hpp"
#include "scenefuse_test/suites.hpp"

namespace fs = std::filesystem;
using namespace scenefuse;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  int id = 0;
  std::string title;
  bool passed = false;
  std::string detail;
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(precision) << v;
  return o.str();
}

std::string failed_checks(const selftest::SuiteReport& r) {
  std::string out;
  for (const auto& c : r.checks) {
    if (!c.passed) out += (out.empty() ? "" : ", ") + c.name + " (" + c.detail + ")";
  }
  return out;
}

Verdict suite_verdict(int id, const std::string& title, const selftest::SuiteReport& r, double budget_s) {
  Verdict v{id, title, false, {}};
  v.passed = r.passed() && (budget_s <= 0.0 || r.seconds < budget_s);
  v.detail = std::to_string(r.checks.size()) + " checks in " + fmt(r.seconds, 2) + " s";
  if (budget_s > 0.0) v.detail += " (budget " + fmt(budget_s, 0) + " s)";
  if (!r.passed()) v.detail += "; failed: " + failed_checks(r);
  return v;
}

// Overfit run on the 20-scene dataset written to disk.
Verdict overfit(const fs::path& data, std::ostream& log) {
  Verdict v{4, "overfit 20 scenes, 500 steps, AP@0.3 >= 0.80 within 15 min", false, {}};
  RunConfig cfg;
  const auto t0 = Clock::now();
  const std::vector<Scene> scenes = load_split(data, "train");
  const TrainResult run = train(cfg, scenes, &log);
  const double train_s = seconds_since(t0);
  const EvalReport report = evaluate(run.checkpoint, data, "train");
  const double total_s = seconds_since(t0);
  log << format_report(report);

  // Mean loss over the first and last 10 steps, reported for context.
  auto window_mean = [&](std::size_t begin) {
    double s = 0.0;
    for (std::size_t i = begin; i < begin + 10; ++i) s += run.log[i].total;
    return s / 10.0;
  };
  const double ap = report.mean_ap[0];
  v.passed = ap >= 0.80 && total_s <= 900.0;
  v.detail = "AP@0.3 " + fmt(ap) + ", AP@0.5 " + fmt(report.mean_ap[1]) + ", loss " + fmt(window_mean(0)) +
             " -> " + fmt(window_mean(run.log.size() - 10)) + ", train " + fmt(train_s, 1) + " s, total " +
             fmt(total_s, 1) + " s";
  return v;
}

struct AblationRow {
  std::string name;
  bool use_hsf = false, use_igf = false;
  std::set<std::string> groups;
  std::size_t scalars = 0;
  double final_loss = 0.0;
  bool finite = true;
  double ap30 = 0.0, ap50 = 0.0;
  double seconds = 0.0;
};

std::set<std::string> group_set(const ParamStore& p) {
  const auto g = p.groups();
  return {g.begin(), g.end()};
}

Verdict ablation(const fs::path& data, std::ostream& log) {
  Verdict v{5, "ablation {baseline-LC, +HSF, +IGF, full}: 100 steps, finite, group-consistent", false, {}};
  std::vector<AblationRow> rows(4);
  const char* names[] = {"baseline-LC", "+HSF", "+IGF", "full"};
  for (int i = 0; i < 4; ++i) {
    rows[i].name = names[i];
    rows[i].use_hsf = i % 2 == 1;
    rows[i].use_igf = i >= 2;
  }
  const std::vector<Scene> scenes = load_split(data, "train");
  const std::set<std::string> hsf_groups{"g2r", "p2g"}, igf_groups{"igf"};
  std::vector<ParamStore> inits;
  std::string problems;

  for (AblationRow& r : rows) {
    RunConfig cfg;
    cfg.steps = 100;
    cfg.use_hsf = r.use_hsf;
    cfg.use_igf = r.use_igf;
    const auto t0 = Clock::now();
    inits.push_back(Model(cfg).initial_parameters());
    try {
      const TrainResult run = train(cfg, scenes, &log);
      r.final_loss = run.log.back().total;
      for (const LossRecord& l : run.log) r.finite = r.finite && std::isfinite(l.total);
      r.groups = group_set(run.checkpoint.params);
      r.scalars = run.checkpoint.params.num_scalars();
      const EvalReport rep = evaluate(run.checkpoint, data, "train");
      r.ap30 = rep.mean_ap[0];
      r.ap50 = rep.mean_ap[1];
    } catch (const NonFiniteLossError& e) {
      r.finite = false;
      problems += r.name + ": " + e.what() + "; ";
    }
    r.seconds = seconds_since(t0);
    if (!r.finite && problems.find(r.name) == std::string::npos) problems += r.name + ": non-finite loss; ";
  }

  // Parameter names and initial values agree outside the toggled groups.
  const ParamStore& full = inits[3];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::set<std::string> expected_missing;
    if (!rows[i].use_hsf) expected_missing.insert(hsf_groups.begin(), hsf_groups.end());
    if (!rows[i].use_igf) expected_missing.insert(igf_groups.begin(), igf_groups.end());
    for (const auto& [name, value] : full) {
      const std::string group = name.substr(0, name.find('.'));
      const bool should_exist = expected_missing.count(group) == 0;
      if (inits[i].contains(name) != should_exist) {
        problems += rows[i].name + ": parameter " + name + (should_exist ? " missing" : " unexpected") + "; ";
      } else if (should_exist && !(inits[i].get(name) == value)) {
        problems += rows[i].name + ": parameter " + name + " initialized differently; ";
      }
    }
    for (const auto& [name, value] : inits[i]) {
      if (!full.contains(name)) problems += rows[i].name + ": extra parameter " + name + "; ";
    }
  }

  std::ostringstream table;
  table << std::left << std::setw(12) << "config" << std::setw(5) << "HSF" << std::setw(5) << "IGF" << std::right
        << std::setw(10) << "params" << std::setw(12) << "final loss" << std::setw(9) << "AP@0.3" << std::setw(9)
        << "AP@0.5" << std::setw(9) << "time s" << "  groups\n";
  for (const AblationRow& r : rows) {
    std::string groups;
    for (const auto& g : r.groups) groups += (groups.empty() ? "" : ",") + g;
    table << std::left << std::setw(12) << r.name << std::setw(5) << (r.use_hsf ? "yes" : "no") << std::setw(5)
          << (r.use_igf ? "yes" : "no") << std::right << std::setw(10) << r.scalars << std::setw(12)
          << fmt(r.final_loss, 4) << std::setw(9) << fmt(r.ap30) << std::setw(9) << fmt(r.ap50) << std::setw(9)
          << fmt(r.seconds, 1) << "  " << groups << "\n";
  }
  std::cout << table.str();

  bool all_finite = true;
  for (const AblationRow& r : rows) all_finite = all_finite && r.finite;
  v.passed = all_finite && problems.empty();
  v.detail = problems.empty() ? "4 configs finite; parameter sets differ only in p2g/g2r and igf" : problems;
  return v;
}

// --- format fuzz ---------------------------------------------------------

SceneSpec random_spec(std::mt19937_64& rng) {
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto pick = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };
  SceneSpec s;
  s.seed = rng();
  s.min_boxes = pick(0, 4);
  s.max_boxes = pick(s.min_boxes, 8);
  s.class_mix = {uni(0.0, 1.0), uni(0.0, 1.0), uni(0.05, 1.0)};
  s.half_extent = uni(12.0, 30.0);
  s.ground_density = uni(0.02, 0.6);
  s.surface_density = uni(1.0, 25.0);
  s.num_cameras = pick(1, 6);
  s.image_width = pick(4, 48);
  s.image_height = pick(4, 32);
  s.horizontal_fov_deg = uni(30.0, 120.0);
  s.camera_height = uni(0.5, 2.5);
  s.point_jitter = uni(0.0, 0.02);
  s.calib_jitter = pick(0, 1) ? uni(0.0, 0.02) : 0.0;
  s.size_jitter = uni(0.0, 0.3);
  s.yaw_range = uni(0.1, std::numbers::pi);
  return s;
}

// Doubles drawn from raw bit patterns, NaN excluded so == stays meaningful.
double random_double(std::mt19937_64& rng) {
  for (;;) {
    const double d = std::bit_cast<double>(rng());
    if (!std::isnan(d)) return d;
  }
}

Checkpoint random_checkpoint(std::mt19937_64& rng) {
  Checkpoint c;
  c.steps_done = static_cast<int>(rng() % 10000);
  c.config.seed = rng();
  c.config.lr = std::uniform_real_distribution<double>(1e-5, 1e-1)(rng);
  c.config.use_igf = rng() % 2;
  c.config.data = "data dir " + std::to_string(rng() % 100);
  const int n = 1 + static_cast<int>(rng() % 6);
  for (int i = 0; i < n; ++i) {
    const int rows = 1 + static_cast<int>(rng() % 5), cols = 1 + static_cast<int>(rng() % 5);
    Tensor t(rng() % 2 ? Shape{rows, cols} : Shape{rows * cols});
    for (double& x : t.values()) x = random_double(rng);
    c.params.add("group" + std::to_string(i % 3) + ".param" + std::to_string(i), std::move(t));
  }
  return c;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

struct CorruptionTally {
  long tried = 0;
  long caught = 0;
  std::string first_miss;
};

// Flips byte `pos` of `file` by `mask`, expects `load` to raise a
// ChecksumError naming the file, then restores the original bytes.
template <class Load>
void corrupt_one(const fs::path& file, std::vector<char>& bytes, std::size_t pos, unsigned char mask, Load&& load,
                 CorruptionTally& tally) {
  const char original = bytes[pos];
  bytes[pos] = static_cast<char>(static_cast<unsigned char>(original) ^ mask);
  write_bytes(file, bytes);
  ++tally.tried;
  bool caught = false;
  try {
    load();
  } catch (const ChecksumError& e) {
    caught = e.file() == file.filename().string();
  } catch (const Error&) {
  }
  if (caught) {
    ++tally.caught;
  } else if (tally.first_miss.empty()) {
    tally.first_miss = file.string() + " byte " + std::to_string(pos);
  }
  bytes[pos] = original;
}

template <class Load>
void corrupt_arrays(const fs::path& dir, bool exhaustive, std::mt19937_64& rng, Load&& load,
                    CorruptionTally& tally) {
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".bin") continue;
    std::vector<char> bytes = read_bytes(entry.path());
    if (bytes.empty()) continue;
    auto mask = [&] { return static_cast<unsigned char>(1 + rng() % 255); };
    if (exhaustive) {
      for (std::size_t pos = 0; pos < bytes.size(); ++pos) corrupt_one(entry.path(), bytes, pos, mask(), load, tally);
    } else {
      for (int k = 0; k < 4; ++k) corrupt_one(entry.path(), bytes, rng() % bytes.size(), mask(), load, tally);
    }
    write_bytes(entry.path(), bytes);
  }
}

Verdict fuzz(const fs::path& root, int iterations) {
  Verdict v{6, "format fuzz: " + std::to_string(iterations) + " round-trips, byte corruption caught", false, {}};
  std::mt19937_64 rng(20260601);
  int mismatches = 0, checkpoints = 0;
  long exhaustive_bytes = 0;
  CorruptionTally tally;
  std::string first_mismatch;
  const auto t0 = Clock::now();
  for (int it = 0; it < iterations; ++it) {
    const fs::path dir = root / ("fuzz_" + std::to_string(it % 4));
    fs::remove_all(dir);
    // Boxes and checkpoint parameters are small, so their payloads are
    // corrupted at every byte; larger arrays at a random sample of bytes.
    if (it % 5 == 4) {
      const Checkpoint ckpt = random_checkpoint(rng);
      save_checkpoint(ckpt, dir);
      const Checkpoint back = load_checkpoint(dir);
      if (!(back.config == ckpt.config && back.params == ckpt.params && back.steps_done == ckpt.steps_done)) {
        ++mismatches;
        if (first_mismatch.empty()) first_mismatch = "checkpoint at iteration " + std::to_string(it);
      }
      ++checkpoints;
      const long before = tally.tried;
      corrupt_arrays(dir, true, rng, [&] { load_checkpoint(dir); }, tally);
      exhaustive_bytes += tally.tried - before;
      continue;
    }
    Scene scene;
    for (;;) {
      try {
        scene = generate(random_spec(rng));
        break;
      } catch (const SceneGenerationError&) {
      }
    }
    write_scene(scene, dir);
    if (!(read_scene(dir) == scene)) {
      ++mismatches;
      if (first_mismatch.empty()) first_mismatch = "scene at iteration " + std::to_string(it);
    }
    const bool exhaustive = it < 8;
    const long before = tally.tried;
    corrupt_arrays(dir, exhaustive, rng, [&] { read_scene(dir); }, tally);
    if (exhaustive) exhaustive_bytes += tally.tried - before;
    // boxes.bin is exhaustively corrupted on every scene iteration.
    if (!exhaustive && fs::file_size(dir / "boxes.bin") > 0) {
      std::vector<char> bytes = read_bytes(dir / "boxes.bin");
      const long b0 = tally.tried;
      for (std::size_t pos = 0; pos < bytes.size(); ++pos) {
        corrupt_one(dir / "boxes.bin", bytes, pos, static_cast<unsigned char>(1 + rng() % 255),
                    [&] { read_scene(dir); }, tally);
      }
      write_bytes(dir / "boxes.bin", bytes);
      exhaustive_bytes += tally.tried - b0;
    }
  }
  v.passed = mismatches == 0 && tally.caught == tally.tried;
  v.detail = std::to_string(iterations - checkpoints) + " scenes + " + std::to_string(checkpoints) +
             " checkpoints, " + std::to_string(mismatches) + " mismatches; " + std::to_string(tally.caught) + "/" +
             std::to_string(tally.tried) + " corruptions caught (" + std::to_string(exhaustive_bytes) +
             " from exhaustive sweeps) in " + fmt(seconds_since(t0), 1) + " s";
  if (!first_mismatch.empty()) v.detail += "; first mismatch: " + first_mismatch;
  if (!tally.first_miss.empty()) v.detail += "; first missed corruption: " + tally.first_miss;
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scenefuse acceptance run"};
  std::vector<int> only;
  std::string workdir;
  std::string log_path;
  int fuzz_iterations = 1000;
  app.add_option("--only", only, "Run only these criteria (1-6)")->check(CLI::Range(1, 6));
  app.add_option("--workdir", workdir, "Scratch directory (default: a fresh temp dir)");
  app.add_option("--log", log_path, "Training and evaluation log (default: <workdir>/acceptance.log)");
  app.add_option("--fuzz-iterations", fuzz_iterations, "Round-trips for criterion 6")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  const fs::path root =
      workdir.empty() ? fs::temp_directory_path() / ("scenefuse_acceptance_" + std::to_string(::getpid())) : fs::path(workdir);
  fs::create_directories(root);
  std::ofstream log(log_path.empty() ? root / "acceptance.log" : fs::path(log_path));

  std::vector<Verdict> verdicts;
  auto record = [&](Verdict v) {
    std::cout << (v.passed ? "PASS" : "FAIL") << " criterion " << v.id << ": " << v.title << " | " << v.detail
              << std::endl;
    verdicts.push_back(std::move(v));
  };
  auto guarded = [&](int id, const std::string& title, auto&& fn) {
    if (!wanted(id)) return;
    try {
      record(fn());
    } catch (const std::exception& e) {
      record(Verdict{id, title, false, std::string("exception: ") + e.what()});
    }
  };

  guarded(1, "gradient suite", [] {
    return suite_verdict(1, "gradient suite, 20 seeds per case, within 3 min", selftest::run_gradient_suite(20),
                         180.0);
  });
  guarded(2, "oracle suite", [] {
    return suite_verdict(2, "oracle suite, within 2 min", selftest::run_oracle_suite(0), 120.0);
  });
  guarded(3, "structural invariants", [] {
    return suite_verdict(3, "structural invariants", selftest::run_invariant_suite(0), 0.0);
  });

  const fs::path data = root / "data";
  if (wanted(4) || wanted(5)) {
    fs::remove_all(data);
    RunConfig cfg;
    generate_dataset(cfg.scene_spec(), cfg.num_scenes, cfg.num_val, data);
  }
  guarded(4, "overfit", [&] { return overfit(data, log); });
  guarded(5, "ablation", [&] { return ablation(data, log); });
  guarded(6, "format fuzz", [&] { return fuzz(root, fuzz_iterations); });

  int failed = 0;
  for (const Verdict& v : verdicts) failed += v.passed ? 0 : 1;
  std::cout << (failed == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL") << ": " << verdicts.size() - failed << "/"
            << verdicts.size() << " criteria passed\n";
  if (workdir.empty() && failed == 0) fs::remove_all(root);
  return failed == 0 ? 0 : 1;
}
