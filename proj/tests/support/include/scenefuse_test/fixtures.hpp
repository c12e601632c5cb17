// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <random>
#include <vector>

#include "scenefuse/config.hpp"
#include "scenefuse/geometry.hpp"
#include "scenefuse/hsf.hpp"
#include "scenefuse/params.hpp"
#include "scenefuse/synthscene.hpp"

namespace scenefuse::selftest {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0);

/// Adds N(0, scale^2) noise to every parameter so zero-initialized heads
/// (deformable offsets, for one) leave their degenerate starting point.
void jitter_params(ParamStore& store, std::mt19937_64& rng, double scale);

/// A few clustered points on a small BEV grid with hand-made projections
/// into `cameras` feature maps of feat_h x feat_w cells at stride 1.
struct ToyPoints {
  PointCloud cloud;
  BevGridSpec grid;
  PillarAssignment pillars;
  ProjectionResult projection;
  int cameras = 2;
  int feat_h = 5;
  int feat_w = 6;

  PointContext context() const { return {&cloud, &pillars, &projection, &grid}; }
};
ToyPoints make_toy_points(std::mt19937_64& rng, int cells, int max_points, int cameras = 2, int feat_h = 5,
                          int feat_w = 6);

/// A scaled-down run: 20 x 20 BEV, C = 16, small images. Trains in well
/// under a second per step.
RunConfig toy_run_config();

/// Scenes for `cfg` with seeds data_seed ^ i.
std::vector<Scene> make_scenes(const RunConfig& cfg, int count);

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& tag);

/// Byte-wise comparison of every file in two directories.
bool directories_identical(const std::filesystem::path& a, const std::filesystem::path& b);

}  // namespace scenefuse::selftest
