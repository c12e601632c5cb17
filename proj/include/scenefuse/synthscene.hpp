// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scenefuse/detection.hpp"
#include "scenefuse/geometry.hpp"
#include "scenefuse/tensor.hpp"

// Procedural multimodal scenes: boxes on a flat ground, LiDAR-like surface
// points, ray-cast camera images with flat class colors.
namespace scenefuse {

struct ObjectClass {
  std::string name;
  Eigen::Vector3d size;  // l, w, h in meters
  std::array<double, 3> color;
  double intensity;
};

/// car, pedestrian, barrier.
const std::vector<ObjectClass>& object_classes();
inline constexpr int kNumClasses = 3;

struct SceneSpec {
  std::uint64_t seed = 0;
  int min_boxes = 3;
  int max_boxes = 8;
  std::array<double, 3> class_mix{0.5, 0.25, 0.25};
  /// Boxes and ground points lie in [-half_extent, half_extent)^2.
  double half_extent = 18.0;
  double ground_density = 0.5;    // points per m^2
  double surface_density = 20.0;  // points per m^2 of box surface
  int num_cameras = 6;
  int image_width = 128;
  int image_height = 64;
  double horizontal_fov_deg = 70.0;
  double camera_height = 1.5;
  double point_jitter = 0.002;  // meters, Gaussian
  double calib_jitter = 0.0;    // radians, Gaussian; off by default
  double size_jitter = 0.1;     // relative, uniform
  /// Yaw drawn from [-yaw_range, yaw_range).
  double yaw_range = 3.141592653589793;

  /// Throws ConfigError for out-of-range fields.
  void validate() const;
  bool operator==(const SceneSpec&) const = default;
};

struct Scene {
  SceneSpec spec;
  PointCloud cloud;
  std::vector<Tensor> images;  // {H, W, 3}, values in [0, 1]
  std::vector<CameraCalibration> calibs;
  std::vector<Box3D> gt;

  bool operator==(const Scene& o) const;
};

/// Deterministic in `spec`. Throws SceneGenerationError when the boxes cannot
/// be placed without overlap within 1000 attempts.
Scene generate(const SceneSpec& spec);

/// Camera ring used by generate(): camera i looks along yaw 2 pi i / n.
std::vector<CameraCalibration> camera_ring(const SceneSpec& spec);

struct RenderResult {
  Tensor image;            // {H, W, 3}
  std::vector<int> ids;    // per pixel: box index, -1 ground, -2 sky
};
RenderResult render_view(const std::vector<Box3D>& boxes, const CameraCalibration& calib);

/// Whether `p` lies inside `box` grown by `margin` on every side.
bool point_in_box(const Eigen::Vector3d& p, const Box3D& box, double margin = 0.0);
/// BEV corners (counter-clockwise) of a box footprint.
std::array<Eigen::Vector2d, 4> bev_corners(const Box3D& box);

void write_scene(const Scene& scene, const std::filesystem::path& dir);
Scene read_scene(const std::filesystem::path& dir);

/// Dataset root: one directory per scene plus index.txt with lines
/// `scene_0000 = train`.
struct DatasetIndex {
  std::vector<std::pair<std::string, std::string>> entries;

  std::vector<std::string> scenes(const std::string& split) const;
};
/// Generates `num_scenes` scenes with seeds base.seed ^ index; the last
/// `num_val` go to the val split.
DatasetIndex generate_dataset(const SceneSpec& base, int num_scenes, int num_val, const std::filesystem::path& root);
DatasetIndex read_index(const std::filesystem::path& root);

struct DatasetStats {
  std::array<int, kNumClasses> class_counts{};
  /// Boxes per bucket of surface-point count: [0,10), [10,20), ... last open.
  std::vector<int> points_per_box_histogram;
  std::size_t foreground_points = 0;
  std::size_t background_points = 0;
};
DatasetStats scene_stats(const std::vector<const Scene*>& scenes, int bucket = 50, int buckets = 10);
std::string format_stats(const DatasetStats& stats);

}  // namespace scenefuse
