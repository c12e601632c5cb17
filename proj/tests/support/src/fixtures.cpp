// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "scenefuse_test/fixtures.hpp"

#include <atomic>
#include <fstream>
#include <iterator>
#include <set>

#include <unistd.h>

namespace scenefuse::selftest {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(shape);
  for (double& v : t.values()) v = n(rng);
  return t;
}

void jitter_params(ParamStore& store, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  for (auto& [_, t] : store)
    for (double& v : t.values()) v += n(rng);
}

ToyPoints make_toy_points(std::mt19937_64& rng, int cells, int max_points, int cameras, int feat_h, int feat_w) {
  ToyPoints tp;
  tp.cameras = cameras;
  tp.feat_h = feat_h;
  tp.feat_w = feat_w;
  tp.grid = BevGridSpec::square(0.5 * cells, 1.0, -2.0, 2.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> cell(0, cells - 1), burst(1, max_points + 2);
  const int clusters = std::max(2, cells);
  for (int k = 0; k < clusters; ++k) {
    const int r = cell(rng), c = cell(rng);
    const int n = burst(rng);
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector2d xy = tp.grid.cell_center(r, c) + Eigen::Vector2d(unit(rng) - 0.5, unit(rng) - 0.5) * 0.98;
      tp.cloud.points.emplace_back(xy.x(), xy.y(), 3.0 * unit(rng) - 1.5);
      tp.cloud.intensity.push_back(unit(rng));
    }
  }
  tp.pillars = voxelize_pillars(tp.cloud, tp.grid, max_points);
  const std::size_t n = tp.cloud.size();
  tp.projection.camera_index.assign(n, -1);
  tp.projection.uv.assign(n, Eigen::Vector2d::Zero());
  tp.projection.depth.assign(n, 0.0);
  tp.projection.valid.assign(n, 0);
  std::uniform_int_distribution<int> cam(0, cameras - 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (unit(rng) < 0.2) continue;  // not seen by any camera
    tp.projection.valid[i] = 1;
    tp.projection.camera_index[i] = cam(rng);
    tp.projection.uv[i] = {unit(rng) * (feat_w - 1), unit(rng) * (feat_h - 1)};
    tp.projection.depth[i] = 1.0 + unit(rng);
  }
  return tp;
}

RunConfig toy_run_config() {
  RunConfig cfg;
  cfg.channels = 16;
  cfg.heads = 2;
  cfg.window = 4;
  cfg.num_instances = 8;
  cfg.deform_points = 4;
  cfg.num_queries = 16;
  cfg.half_extent = 6.0;
  cfg.image_width = 64;
  cfg.image_height = 32;
  cfg.min_boxes = 1;
  cfg.max_boxes = 3;
  cfg.steps = 5;
  cfg.log_every = 1;
  return cfg;
}

std::vector<Scene> make_scenes(const RunConfig& cfg, int count) {
  std::vector<Scene> out;
  for (int i = 0; i < count; ++i) {
    SceneSpec spec = cfg.scene_spec();
    spec.seed = cfg.data_seed ^ static_cast<std::uint64_t>(i);
    out.push_back(generate(spec));
  }
  return out;
}

std::filesystem::path scratch_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const std::filesystem::path dir = std::filesystem::temp_directory_path() /
                                    ("scenefuse_" + tag + "_" + std::to_string(::getpid()) + "_" +
                                     std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

namespace {

std::set<std::string> listing(const std::filesystem::path& dir) {
  std::set<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir)) names.insert(e.path().filename().string());
  return names;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

bool directories_identical(const std::filesystem::path& a, const std::filesystem::path& b) {
  const auto names = listing(a);
  if (names != listing(b)) return false;
  for (const std::string& n : names)
    if (slurp(a / n) != slurp(b / n)) return false;
  return true;
}

}  // namespace scenefuse::selftest
