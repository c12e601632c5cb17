// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "scenefuse/geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "scenefuse/error.hpp"

namespace scenefuse {

void PointCloud::validate() const {
  if (points.size() != intensity.size()) throw ConfigError("point cloud: points/intensity length mismatch");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite() || !std::isfinite(intensity[i])) {
      throw ConfigError("point cloud: non-finite value at point " + std::to_string(i));
    }
  }
}

void CameraCalibration::validate() const {
  constexpr double kTol = 1e-6;
  if (width <= 0 || height <= 0) throw ConfigError("camera: image size must be positive");
  if ((rotation * rotation.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > kTol ||
      std::abs(rotation.determinant() - 1.0) > kTol) {
    throw ConfigError("camera: rotation is not a proper orthonormal matrix");
  }
  if (intrinsic(0, 0) <= 0.0 || intrinsic(1, 1) <= 0.0) throw ConfigError("camera: focal lengths must be positive");
  if (intrinsic(1, 0) != 0.0 || intrinsic(2, 0) != 0.0 || intrinsic(2, 1) != 0.0) {
    throw ConfigError("camera: intrinsic lower triangle must be zero");
  }
  if (!translation.allFinite() || !intrinsic.allFinite()) throw ConfigError("camera: non-finite calibration");
}

Eigen::Vector3d CameraCalibration::unproject(const Eigen::Vector2d& uv, double depth) const {
  const Eigen::Vector3d cam = depth * intrinsic.inverse() * Eigen::Vector3d(uv.x(), uv.y(), 1.0);
  return rotation.transpose() * (cam - translation);
}

BevGridSpec BevGridSpec::square(double half_extent, double cell, double z_min, double z_max) {
  if (!(cell > 0.0) || !(half_extent > 0.0)) throw ConfigError("grid: extent and cell size must be positive");
  const double n = 2.0 * half_extent / cell;
  const double rounded = std::round(n);
  if (std::abs(n - rounded) > 1e-9 * rounded) {
    throw ConfigError("grid: extent " + std::to_string(2.0 * half_extent) + " is not a multiple of cell " +
                      std::to_string(cell));
  }
  if (!(z_max > z_min)) throw ConfigError("grid: empty z range");
  BevGridSpec s;
  s.x_min = s.y_min = -half_extent;
  s.x_max = s.y_max = half_extent;
  s.z_min = z_min;
  s.z_max = z_max;
  s.cell = cell;
  s.cols = s.rows = static_cast<int>(rounded);
  return s;
}

bool BevGridSpec::contains(const Eigen::Vector3d& p) const {
  return p.x() >= x_min && p.x() < x_max && p.y() >= y_min && p.y() < y_max && p.z() >= z_min && p.z() < z_max;
}

std::optional<GridIndex> BevGridSpec::locate(double x, double y) const {
  if (!(x >= x_min && x < x_max && y >= y_min && y < y_max)) return std::nullopt;
  // Rounding can push a point just below the upper bound onto index cols/rows.
  const int col = std::min(static_cast<int>(std::floor((x - x_min) / cell)), cols - 1);
  const int row = std::min(static_cast<int>(std::floor((y - y_min) / cell)), rows - 1);
  return GridIndex{row, col};
}

Eigen::Vector2d BevGridSpec::cell_center(int row, int col) const {
  return {x_min + (col + 0.5) * cell, y_min + (row + 0.5) * cell};
}

Eigen::Vector2d BevGridSpec::to_cell_coords(double x, double y) const {
  return {(y - y_min) / cell - 0.5, (x - x_min) / cell - 0.5};
}

std::vector<std::uint8_t> PillarAssignment::mask() const {
  std::vector<std::uint8_t> m(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) m[i] = slots[i] >= 0 ? 1 : 0;
  return m;
}

PillarAssignment voxelize_pillars(const PointCloud& cloud, const BevGridSpec& spec, int max_points) {
  if (max_points < 1) throw ConfigError("voxelize_pillars: max_points must be >= 1");
  if (cloud.empty()) throw EmptySceneError("voxelize_pillars: empty point cloud");
  cloud.validate();

  std::map<std::pair<int, int>, std::vector<int>> buckets;
  std::size_t in_range = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d& p = cloud.points[i];
    if (!spec.contains(p)) continue;
    const auto idx = spec.locate(p.x(), p.y());
    buckets[{idx->row, idx->col}].push_back(static_cast<int>(i));
    ++in_range;
  }
  if (in_range == 0) throw EmptySceneError("voxelize_pillars: no points inside the BEV range");

  PillarAssignment out;
  out.max_points = max_points;
  out.in_range_points = in_range;
  out.cells.reserve(buckets.size());
  out.slots.assign(buckets.size() * static_cast<std::size_t>(max_points), -1);
  out.counts.reserve(buckets.size());
  std::size_t p = 0;
  for (auto& [rc, members] : buckets) {
    if (static_cast<int>(members.size()) > max_points) {
      const Eigen::Vector2d c = spec.cell_center(rc.first, rc.second);
      auto dist2 = [&](int i) { return (cloud.points[static_cast<std::size_t>(i)].head<2>() - c).squaredNorm(); };
      std::stable_sort(members.begin(), members.end(), [&](int a, int b) {
        const double da = dist2(a), db = dist2(b);
        return da < db || (da == db && a < b);
      });
      out.truncated_points += members.size() - static_cast<std::size_t>(max_points);
      members.resize(static_cast<std::size_t>(max_points));
      std::sort(members.begin(), members.end());
    }
    out.cells.push_back({rc.first, rc.second});
    out.counts.push_back(static_cast<int>(members.size()));
    std::copy(members.begin(), members.end(), out.slots.begin() + static_cast<std::ptrdiff_t>(p * max_points));
    ++p;
  }
  return out;
}

ProjectionResult project_points(const PointCloud& cloud, std::span<const CameraCalibration> calibs) {
  if (calibs.empty()) throw ConfigError("project_points: at least one camera is required");
  ProjectionResult r;
  const std::size_t n = cloud.size();
  r.camera_index.assign(n, -1);
  r.uv.assign(n, Eigen::Vector2d::Zero());
  r.depth.assign(n, 0.0);
  r.valid.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < calibs.size(); ++c) {
      const CameraCalibration& cam = calibs[c];
      const Eigen::Vector3d pc = cam.to_camera(cloud.points[i]);
      if (!(pc.z() > 0.0)) continue;
      const Eigen::Vector3d h = cam.intrinsic * pc;
      const double u = h.x() / h.z();
      const double v = h.y() / h.z();
      if (u >= 0.0 && u < cam.width && v >= 0.0 && v < cam.height) {
        r.camera_index[i] = static_cast<int>(c);
        r.uv[i] = {u, v};
        r.depth[i] = pc.z();
        r.valid[i] = 1;
        break;
      }
    }
  }
  return r;
}

Eigen::Vector2d image_to_feature(const Eigen::Vector2d& uv_px, int stride) {
  const double s = static_cast<double>(stride);
  return {(uv_px.x() + 0.5) / s - 0.5, (uv_px.y() + 0.5) / s - 0.5};
}

std::array<BilinearTap, 4> bilinear_taps(double u, double v) {
  const double c0 = std::floor(u);
  const double r0 = std::floor(v);
  const double fu = u - c0;
  const double fv = v - r0;
  const int c = static_cast<int>(c0);
  const int r = static_cast<int>(r0);
  return {{
      {r, c, (1.0 - fu) * (1.0 - fv), -(1.0 - fv), -(1.0 - fu)},
      {r, c + 1, fu * (1.0 - fv), (1.0 - fv), -fu},
      {r + 1, c, (1.0 - fu) * fv, -fv, (1.0 - fu)},
      {r + 1, c + 1, fu * fv, fv, fu},
  }};
}

std::vector<double> bilinear_sample(const Tensor& map, double u, double v) {
  if (map.rank() != 3) throw ConfigError("bilinear_sample: map must be {H, W, C}");
  const int h = map.dim(0), w = map.dim(1), ch = map.dim(2);
  std::vector<double> out(static_cast<std::size_t>(ch), 0.0);
  if (!std::isfinite(u) || !std::isfinite(v)) throw ConfigError("bilinear_sample: non-finite coordinate");
  if (u <= -1.0 || v <= -1.0 || u >= w || v >= h) return out;
  for (const BilinearTap& t : bilinear_taps(u, v)) {
    if (t.row < 0 || t.row >= h || t.col < 0 || t.col >= w || t.weight == 0.0) continue;
    for (int k = 0; k < ch; ++k) out[static_cast<std::size_t>(k)] += t.weight * map.at(t.row, t.col, k);
  }
  return out;
}

}  // namespace scenefuse
