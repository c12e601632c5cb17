// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "scenefuse/container.hpp"
#include "scenefuse/error.hpp"
#include "scenefuse/harness.hpp"

namespace scenefuse {

namespace {

Raster gray_raster(const std::vector<double>& values, int rows, int cols, double lo, double hi) {
  Raster r{cols, rows, std::vector<std::uint8_t>(static_cast<std::size_t>(rows) * cols * 3)};
  const double span = hi - lo;
  for (int row = 0; row < rows; ++row) {
    for (int col = 0; col < cols; ++col) {
      const double v = values[static_cast<std::size_t>(row) * cols + col];
      const double t = span > 0.0 ? std::clamp((v - lo) / span, 0.0, 1.0) : 0.0;
      const auto g = static_cast<std::uint8_t>(std::lround(255.0 * t));
      const std::size_t px = (static_cast<std::size_t>(rows - 1 - row) * cols + col) * 3;
      r.rgb[px] = r.rgb[px + 1] = r.rgb[px + 2] = g;
    }
  }
  return r;
}

void write_sidecar(const std::filesystem::path& path, const std::string& map, const std::string& quantity, double lo,
                   double hi, int scale) {
  std::ofstream out(path, std::ios::trunc);
  out << "map = " << map << "\n";
  out << "quantity = " << quantity << "\n";
  out << "black = " << format_double(lo) << "\n";
  out << "white = " << format_double(hi) << "\n";
  out << "pixels_per_cell = " << scale << "\n";
  out << "orientation = cell (row, col) -> pixel (x = col, y = rows - 1 - row); +x right is +x ego, up is +y ego\n";
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
}

void draw_line(Raster& r, Eigen::Vector2d a, Eigen::Vector2d b, std::array<std::uint8_t, 3> color) {
  const int steps = static_cast<int>(std::ceil((b - a).norm() * 2.0)) + 1;
  for (int i = 0; i <= steps; ++i) {
    const Eigen::Vector2d p = a + (b - a) * (static_cast<double>(i) / steps);
    const int x = static_cast<int>(std::floor(p.x())), y = static_cast<int>(std::floor(p.y()));
    if (x < 0 || y < 0 || x >= r.width || y >= r.height) continue;
    const std::size_t px = (static_cast<std::size_t>(y) * r.width + x) * 3;
    for (int c = 0; c < 3; ++c) r.rgb[px + static_cast<std::size_t>(c)] = color[static_cast<std::size_t>(c)];
  }
}

}  // namespace

const std::vector<std::string>& bev_map_names() {
  static const std::vector<std::string> names{"bp", "bi", "bf", "bpf", "bhatf", "heatmap", "boxes"};
  return names;
}

Raster render_feature_map(const Tensor& map, int rows, int cols, double* lo, double* hi) {
  if (map.rank() != 2 || map.dim(0) != rows * cols) throw ConfigError("render: map must be {rows * cols, C}");
  std::vector<double> norms(static_cast<std::size_t>(rows) * cols);
  for (int i = 0; i < rows * cols; ++i) {
    double s = 0.0;
    for (int c = 0; c < map.dim(1); ++c) s += map.at(i, c) * map.at(i, c);
    norms[static_cast<std::size_t>(i)] = std::sqrt(s);
  }
  const auto [mn, mx] = std::minmax_element(norms.begin(), norms.end());
  const double l = norms.empty() ? 0.0 : *mn, h = norms.empty() ? 0.0 : *mx;
  if (lo) *lo = l;
  if (hi) *hi = h;
  return gray_raster(norms, rows, cols, l, h);
}

void write_ppm(const Raster& raster, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << "P6\n" << raster.width << " " << raster.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(raster.rgb.data()), static_cast<std::streamsize>(raster.rgb.size()));
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
}

std::vector<std::filesystem::path> render_bev(const Checkpoint& ckpt, const Scene& scene,
                                              const std::vector<std::string>& maps, const std::filesystem::path& out) {
  const auto& valid = bev_map_names();
  for (const std::string& m : maps) {
    if (std::find(valid.begin(), valid.end(), m) == valid.end()) {
      std::string list;
      for (const std::string& v : valid) list += (list.empty() ? "" : ", ") + v;
      throw ConfigError("unknown map '" + m + "'; valid maps: " + list);
    }
  }
  std::filesystem::create_directories(out);
  const Model model(ckpt.config);
  const BevGridSpec& g = model.grid();
  const PreparedScene prepared = prepare_scene(scene, g, ckpt.config.max_points);
  ad::Tape tape(false);
  const Model::Output fwd = model.forward(tape, ckpt.params, prepared);
  std::vector<std::filesystem::path> written;
  for (const std::string& m : maps) {
    const std::filesystem::path img = out / (m + ".ppm"), side = out / (m + ".txt");
    if (m == "heatmap") {
      const Tensor& logits = fwd.igf ? fwd.igf->heatmap.logits.value() : fwd.decoder.heatmap.logits.value();
      std::vector<double> peak(static_cast<std::size_t>(g.num_cells()));
      for (int i = 0; i < g.num_cells(); ++i) {
        double best = 0.0;
        for (int c = 0; c < logits.dim(1); ++c) best = std::max(best, 1.0 / (1.0 + std::exp(-logits.at(i, c))));
        peak[static_cast<std::size_t>(i)] = best;
      }
      write_ppm(gray_raster(peak, g.rows, g.cols, 0.0, 1.0), img);
      write_sidecar(side, m, std::string("max-over-classes centerness probability (") +
                                 (fwd.igf ? "instance selection head" : "decoder head") + ")",
                    0.0, 1.0, 1);
    } else if (m == "boxes") {
      const int scale = 4;
      Raster r{g.cols * scale, g.rows * scale, {}};
      r.rgb.assign(static_cast<std::size_t>(r.width) * r.height * 3, 0);
      for (std::size_t p = 0; p < prepared.pillars.num_pillars(); ++p) {
        const GridIndex c = prepared.pillars.cells[p];
        const auto v = static_cast<std::uint8_t>(40 + 60 * prepared.pillars.counts[p] / prepared.pillars.max_points);
        for (int dy = 0; dy < scale; ++dy)
          for (int dx = 0; dx < scale; ++dx) {
            const std::size_t px =
                (static_cast<std::size_t>((g.rows - 1 - c.row) * scale + dy) * r.width + c.col * scale + dx) * 3;
            r.rgb[px] = r.rgb[px + 1] = r.rgb[px + 2] = v;
          }
      }
      auto to_px = [&](const Eigen::Vector2d& xy) {
        return Eigen::Vector2d((xy.x() - g.x_min) / g.cell * scale, (g.y_max - xy.y()) / g.cell * scale);
      };
      auto draw_box = [&](const Box3D& b, std::array<std::uint8_t, 3> color) {
        const auto corners = bev_corners(b);
        for (int i = 0; i < 4; ++i)
          draw_line(r, to_px(corners[static_cast<std::size_t>(i)]), to_px(corners[static_cast<std::size_t>((i + 1) % 4)]),
                    color);
      };
      const DetectionSet det = model.detect(ckpt.params, prepared);
      for (const Box3D& b : det.boxes) draw_box(b, {170, 170, 170});
      for (const Box3D& b : scene.gt) draw_box(b, {40, 220, 60});
      write_ppm(r, img);
      write_sidecar(side, m, "pillar occupancy (gray fill), predictions (light gray), ground truth (green)", 0.0,
                    static_cast<double>(prepared.pillars.max_points), scale);
    } else {
      const ad::Var v = m == "bp" ? fwd.b_point
                      : m == "bi" ? fwd.b_image
                      : m == "bf" ? fwd.b_fused
                      : m == "bpf" ? fwd.b_prime
                                   : fwd.b_hat;
      double lo = 0.0, hi = 0.0;
      write_ppm(render_feature_map(v.value(), g.rows, g.cols, &lo, &hi), img);
      write_sidecar(side, m, "per-cell channel L2 norm", lo, hi, 1);
    }
    written.push_back(img);
    written.push_back(side);
  }
  return written;
}

}  // namespace scenefuse
