// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <array>
#include <optional>
#include <span>
#include <vector>

#include "scenefuse/tensor.hpp"

namespace scenefuse {

/// LiDAR sweep in the ego frame: meters, intensity in [0, 1].
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<double> intensity;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  /// Throws ConfigError on mismatched lengths or non-finite values.
  void validate() const;
};

/// Pinhole camera. `rotation` and `translation` map ego to camera
/// coordinates (x right, y down, z forward).
struct CameraCalibration {
  Eigen::Matrix3d intrinsic = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  int width = 1;
  int height = 1;

  void validate() const;
  Eigen::Vector3d to_camera(const Eigen::Vector3d& ego) const { return rotation * ego + translation; }
  /// Inverse of projection: pixel + camera depth back to the ego frame.
  Eigen::Vector3d unproject(const Eigen::Vector2d& uv, double depth) const;
};

struct GridIndex {
  int row = 0;  // along y
  int col = 0;  // along x
  bool operator==(const GridIndex&) const = default;
};

/// BEV discretization. Columns run along x, rows along y; intervals are
/// lower-inclusive and upper-exclusive.
struct BevGridSpec {
  double x_min = -54.0, x_max = 54.0;
  double y_min = -54.0, y_max = 54.0;
  double z_min = -5.0, z_max = 3.0;
  double cell = 0.6;
  int cols = 180;
  int rows = 180;

  /// Square grid over [-half_extent, half_extent). Throws ConfigError unless
  /// the extent is an exact multiple of the cell size.
  static BevGridSpec square(double half_extent, double cell, double z_min = -5.0, double z_max = 3.0);

  bool contains(const Eigen::Vector3d& p) const;
  std::optional<GridIndex> locate(double x, double y) const;
  /// Metric (x, y) of a cell center.
  Eigen::Vector2d cell_center(int row, int col) const;
  /// Continuous (row, col) coordinate whose integer values are cell centers.
  Eigen::Vector2d to_cell_coords(double x, double y) const;
  int num_cells() const { return rows * cols; }
  bool operator==(const BevGridSpec&) const = default;
};

/// Points grouped by pillar. Pillars are listed in (row, col) order; each has
/// `max_points` slots holding point indices or -1.
struct PillarAssignment {
  int max_points = 0;
  std::vector<GridIndex> cells;
  std::vector<int> slots;  // pillars * max_points
  std::vector<int> counts;
  std::size_t in_range_points = 0;
  std::size_t truncated_points = 0;

  std::size_t num_pillars() const { return cells.size(); }
  int point(std::size_t pillar, int slot) const {
    return slots[pillar * static_cast<std::size_t>(max_points) + static_cast<std::size_t>(slot)];
  }
  bool valid(std::size_t pillar, int slot) const { return point(pillar, slot) >= 0; }
  /// Validity mask, pillars x max_points.
  std::vector<std::uint8_t> mask() const;
};

/// Groups in-range points into pillars of at most `max_points` points.
/// Overflowing pillars keep the points nearest the pillar center in xy (ties
/// by point index). Throws EmptySceneError when nothing is in range.
PillarAssignment voxelize_pillars(const PointCloud& cloud, const BevGridSpec& spec, int max_points);

struct ProjectionResult {
  std::vector<int> camera_index;  // -1 when not visible
  std::vector<Eigen::Vector2d> uv;  // image pixels
  std::vector<double> depth;        // camera-frame z
  std::vector<std::uint8_t> valid;

  std::size_t size() const { return valid.size(); }
};

/// Projects every point into the lowest-index camera where it has positive
/// depth and lands inside the image.
ProjectionResult project_points(const PointCloud& cloud, std::span<const CameraCalibration> calibs);

/// Image pixel coordinate to feature-map cell coordinate for a map
/// downsampled by `stride` (pixel centers at +0.5).
Eigen::Vector2d image_to_feature(const Eigen::Vector2d& uv_px, int stride);

struct BilinearTap {
  int row = 0;
  int col = 0;
  double weight = 0.0;
  double d_du = 0.0;  // d weight / d u
  double d_dv = 0.0;  // d weight / d v
};

/// The four interpolation taps around (u, v) = (col, row). Taps may lie
/// outside the map; callers skip them (zero padding). The derivative at
/// integer coordinates is the one-sided derivative from above.
std::array<BilinearTap, 4> bilinear_taps(double u, double v);

/// Bilinear sample of a {H, W, C} map at (u, v) = (col, row).
std::vector<double> bilinear_sample(const Tensor& map, double u, double v);

}  // namespace scenefuse
