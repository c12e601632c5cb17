// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "scenefuse/hsf.hpp"

#include <algorithm>

#include "scenefuse/error.hpp"
#include "scenefuse/ops.hpp"

namespace scenefuse {

void HsfConfig::validate() const {
  attention().validate();
  if (max_points < 1) throw ConfigError("hsf: max_points must be >= 1");
  if (window < 1) throw ConfigError("hsf: window must be >= 1");
  if (g2r_blocks < 0 || p2g_blocks < 0) throw ConfigError("hsf: block counts must be >= 0");
}

LayerNorm block_norm1(const std::string& prefix, int channels) { return {prefix + ".norm1", channels}; }

void init_prenorm_block(ParamStore& store, std::mt19937_64& rng, const std::string& prefix, int channels) {
  LayerNorm{prefix + ".norm1", channels}.init(store);
  LayerNorm{prefix + ".norm2", channels}.init(store);
  FeedForward{prefix + ".ffn", channels, 2 * channels}.init(store, rng);
}

ad::Var prenorm_ffn(ad::Tape& tape, const ParamStore& store, const std::string& prefix, ad::Var x, int channels) {
  const LayerNorm norm{prefix + ".norm2", channels};
  const FeedForward ffn{prefix + ".ffn", channels, 2 * channels};
  return ad::add(x, ffn(tape, store, norm(tape, store, x)));
}

ImageEncoder::ImageEncoder(std::string name, int channels)
    : name_(std::move(name)),
      channels_(channels),
      conv1_{name_ + ".conv1", 3, 16, 3, 2, 1},
      conv2_{name_ + ".conv2", 16, channels, 3, 2, 1},
      conv3_{name_ + ".conv3", channels, channels, 3, 1, 1} {}

void ImageEncoder::init(ParamStore& store, std::mt19937_64& rng) const {
  conv1_.init(store, rng);
  conv2_.init(store, rng);
  conv3_.init(store, rng);
}

ad::Var ImageEncoder::forward(ad::Tape& tape, const ParamStore& store, const Tensor& image) const {
  if (image.rank() != 3 || image.dim(2) != 3) throw ConfigError("image encoder: expected {H, W, 3}");
  ad::Var x = tape.constant(image);
  x = ad::relu(conv1_(tape, store, x));
  x = ad::relu(conv2_(tape, store, x));
  return conv3_(tape, store, x);
}

PointEncoder::PointEncoder(std::string name, int channels)
    : name_(std::move(name)),
      channels_(channels),
      point_fc_{name_ + ".point_fc", kPointFeatures, channels / 2},
      conv1_{name_ + ".conv1", channels / 2 + kPillarStats, channels},
      conv2_{name_ + ".conv2", channels, channels} {
  if (channels < 2) throw ConfigError("point encoder: channels must be >= 2");
}

void PointEncoder::init(ParamStore& store, std::mt19937_64& rng) const {
  point_fc_.init(store, rng);
  conv1_.init(store, rng);
  conv2_.init(store, rng);
}

Tensor point_descriptors(const PointContext& ctx, std::span<const int> pillar_of, std::span<const int> points) {
  const BevGridSpec& g = *ctx.grid;
  Tensor out({static_cast<int>(points.size()), PointEncoder::kPointFeatures});
  const double zspan = g.z_max - g.z_min;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const GridIndex cell = ctx.pillars->cells[static_cast<std::size_t>(pillar_of[i])];
    const Eigen::Vector2d center = g.cell_center(cell.row, cell.col);
    const Eigen::Vector3d& p = ctx.cloud->points[static_cast<std::size_t>(points[i])];
    const int r = static_cast<int>(i);
    out.at(r, 0) = (p.x() - center.x()) / g.cell;
    out.at(r, 1) = (p.y() - center.y()) / g.cell;
    out.at(r, 2) = 2.0 * (p.z() - g.z_min) / zspan - 1.0;
    out.at(r, 3) = ctx.cloud->intensity[static_cast<std::size_t>(points[i])];
  }
  return out;
}

namespace {

std::vector<int> pillar_cells(const PointContext& ctx) {
  std::vector<int> cells;
  cells.reserve(ctx.pillars->num_pillars());
  for (const GridIndex& c : ctx.pillars->cells) cells.push_back(c.row * ctx.grid->cols + c.col);
  return cells;
}

}  // namespace

ad::Var PointEncoder::forward(ad::Tape& tape, const ParamStore& store, const PointContext& ctx) const {
  const PillarAssignment& pa = *ctx.pillars;
  const BevGridSpec& g = *ctx.grid;
  std::vector<int> points, pillar_of, offsets{0};
  for (std::size_t p = 0; p < pa.num_pillars(); ++p) {
    for (int s = 0; s < pa.max_points; ++s) {
      if (!pa.valid(p, s)) continue;
      points.push_back(pa.point(p, s));
      pillar_of.push_back(static_cast<int>(p));
    }
    offsets.push_back(static_cast<int>(points.size()));
  }
  const int np = static_cast<int>(pa.num_pillars());
  Tensor stats({np, kPillarStats});
  const double zspan = g.z_max - g.z_min;
  for (int p = 0; p < np; ++p) {
    double zsum = 0.0, zmax = -1.0;
    for (int i = offsets[static_cast<std::size_t>(p)]; i < offsets[static_cast<std::size_t>(p) + 1]; ++i) {
      const double z = 2.0 * (ctx.cloud->points[static_cast<std::size_t>(points[static_cast<std::size_t>(i)])].z() -
                              g.z_min) / zspan - 1.0;
      zsum += z;
      zmax = std::max(zmax, z);
    }
    const int n = pa.counts[static_cast<std::size_t>(p)];
    stats.at(p, 0) = static_cast<double>(n) / pa.max_points;
    stats.at(p, 1) = n > 0 ? zsum / n : 0.0;
    stats.at(p, 2) = n > 0 ? zmax : 0.0;
  }
  ad::Var desc = tape.constant(point_descriptors(ctx, pillar_of, points));
  ad::Var pooled = ad::segment_max(ad::relu(point_fc_(tape, store, desc)), offsets);
  ad::Var pillar_feat = ad::concat_cols({pooled, tape.constant(std::move(stats))});
  ad::Var bev = ad::scatter_rows(pillar_feat, pillar_cells(ctx), g.num_cells());
  bev = ad::reshape(bev, {g.rows, g.cols, channels_ / 2 + kPillarStats});
  bev = ad::relu(conv1_(tape, store, bev));
  bev = conv2_(tape, store, bev);
  return ad::reshape(bev, {g.num_cells(), channels_});
}

VisiblePoints visible_points(const PointContext& ctx) {
  const PillarAssignment& pa = *ctx.pillars;
  VisiblePoints vp;
  vp.offsets.push_back(0);
  for (std::size_t p = 0; p < pa.num_pillars(); ++p) {
    for (int s = 0; s < pa.max_points; ++s) {
      const int pt = pa.point(p, s);
      if (pt < 0 || !ctx.projection->valid[static_cast<std::size_t>(pt)]) continue;
      vp.points.push_back(pt);
      vp.pillar_of.push_back(static_cast<int>(p));
    }
    vp.offsets.push_back(static_cast<int>(vp.points.size()));
  }
  return vp;
}

ad::Var gather_point_image_features(ad::Tape& tape, const ImageFeatureMap& images, const ProjectionResult& projection,
                                    std::span<const int> points) {
  if (images.maps.empty()) throw ConfigError("image features: no cameras");
  const int c = images.maps.front().dim(2);
  const int n = static_cast<int>(points.size());
  ad::Var total;
  for (std::size_t cam = 0; cam < images.maps.size(); ++cam) {
    std::vector<int> rows;
    std::vector<double> uv;
    for (int i = 0; i < n; ++i) {
      const auto pt = static_cast<std::size_t>(points[static_cast<std::size_t>(i)]);
      if (!projection.valid[pt] || projection.camera_index[pt] != static_cast<int>(cam)) continue;
      const Eigen::Vector2d f = image_to_feature(projection.uv[pt], images.stride);
      rows.push_back(i);
      uv.push_back(f.x());
      uv.push_back(f.y());
    }
    if (rows.empty()) continue;
    const int m = static_cast<int>(rows.size());
    ad::Var samples = ad::bilinear_sample(images.maps[cam], tape.constant(Tensor({m, 2}, std::move(uv))));
    ad::Var placed = ad::scatter_rows(samples, std::move(rows), n);
    total = total.valid() ? ad::add(total, placed) : placed;
  }
  return total.valid() ? total : tape.constant(Tensor({n, c}));
}

PointToGrid::PointToGrid(std::string name, HsfConfig cfg)
    : name_(std::move(name)), cfg_(cfg), posenc_{name_ + ".posenc", PointEncoder::kPointFeatures, cfg.channels} {
  cfg_.validate();
  for (int b = 0; b < cfg_.p2g_blocks; ++b)
    attn_.emplace_back(name_ + ".block" + std::to_string(b) + ".attn", cfg_.attention());
}

void PointToGrid::init(ParamStore& store, std::mt19937_64& rng) const {
  if (cfg_.point_posenc) posenc_.init(store, rng);
  for (int b = 0; b < cfg_.p2g_blocks; ++b) {
    attn_[static_cast<std::size_t>(b)].init(store, rng);
    if (cfg_.p2g_residual) init_prenorm_block(store, rng, name_ + ".block" + std::to_string(b), cfg_.channels);
  }
}

ad::Var PointToGrid::forward(ad::Tape& tape, const ParamStore& store, const PointContext& ctx,
                             const ImageFeatureMap& images, AttentionProbe* probe) const {
  const int cells = ctx.grid->num_cells();
  const VisiblePoints vp = visible_points(ctx);
  if (vp.points.empty()) return tape.constant(Tensor({cells, cfg_.channels}));
  ad::Var x = gather_point_image_features(tape, images, *ctx.projection, vp.points);
  if (cfg_.point_posenc) {
    x = ad::add(x, posenc_(tape, store, tape.constant(point_descriptors(ctx, vp.pillar_of, vp.points))));
  }
  for (int b = 0; b < cfg_.p2g_blocks; ++b) {
    const MultiHeadAttention& attn = attn_[static_cast<std::size_t>(b)];
    if (cfg_.p2g_residual) {
      const std::string prefix = name_ + ".block" + std::to_string(b);
      ad::Var h = block_norm1(prefix, cfg_.channels)(tape, store, x);
      x = ad::add(x, msa_segments(tape, store, attn, h, vp.offsets, probe));
      x = prenorm_ffn(tape, store, prefix, x, cfg_.channels);
    } else {
      x = msa_segments(tape, store, attn, x, vp.offsets, probe);
    }
  }
  ad::Var pooled = ad::segment_max(x, vp.offsets);
  return ad::scatter_rows(pooled, pillar_cells(ctx), cells);
}

ad::Var pool_point_image_features(ad::Tape& tape, const PointContext& ctx, const ImageFeatureMap& images) {
  const int cells = ctx.grid->num_cells();
  const VisiblePoints vp = visible_points(ctx);
  if (vp.points.empty()) return tape.constant(Tensor({cells, images.maps.front().dim(2)}));
  ad::Var x = gather_point_image_features(tape, images, *ctx.projection, vp.points);
  return ad::scatter_rows(ad::segment_max(x, vp.offsets), pillar_cells(ctx), cells);
}

FuseBev::FuseBev(std::string name, HsfConfig cfg)
    : name_(std::move(name)), cfg_(cfg), conv_{name_ + ".conv", 2 * cfg.channels, cfg.channels} {}

void FuseBev::init(ParamStore& store, std::mt19937_64& rng) const {
  conv_.init(store, rng);
  if (cfg_.fuse_norm) LayerNorm{name_ + ".norm", cfg_.channels}.init(store);
}

ad::Var FuseBev::forward(ad::Tape& tape, const ParamStore& store, ad::Var b_image, ad::Var b_point, int rows,
                         int cols) const {
  if (b_image.shape() != b_point.shape() || b_image.value().rank() != 2 || b_image.dim(0) != rows * cols) {
    throw ConfigError("fuse_bev: B_I " + shape_string(b_image.shape()) + " and B_P " +
                      shape_string(b_point.shape()) + " must both be {" + std::to_string(rows * cols) + ", C}");
  }
  ad::Var x = ad::reshape(ad::concat_cols({b_image, b_point}), {rows, cols, 2 * cfg_.channels});
  x = ad::reshape(conv_(tape, store, x), {rows * cols, cfg_.channels});
  if (cfg_.fuse_norm) x = LayerNorm{name_ + ".norm", cfg_.channels}(tape, store, x);
  return ad::relu(x);
}

GridToRegion::GridToRegion(std::string name, HsfConfig cfg) : name_(std::move(name)), cfg_(cfg) { cfg_.validate(); }

std::string GridToRegion::pass_name(int pass) const { return name_ + ".pass" + std::to_string(pass); }

void GridToRegion::init(ParamStore& store, std::mt19937_64& rng) const {
  const int entries = (2 * cfg_.window - 1) * (2 * cfg_.window - 1);
  for (int p = 0; p < 2 * cfg_.g2r_blocks; ++p) {
    const std::string prefix = pass_name(p);
    MultiHeadAttention(prefix + ".attn", cfg_.attention()).init(store, rng);
    if (cfg_.relative_bias) store.add(prefix + ".rel_bias", init::normal({entries, cfg_.heads}, 0.02, rng));
    init_prenorm_block(store, rng, prefix, cfg_.channels);
  }
}

ad::Var GridToRegion::forward(ad::Tape& tape, const ParamStore& store, ad::Var b_fused, int rows, int cols,
                              AttentionProbe* probe) const {
  if (cfg_.g2r_identity) return b_fused;
  ad::Var x = b_fused;
  for (int p = 0; p < 2 * cfg_.g2r_blocks; ++p) {
    const std::string prefix = pass_name(p);
    const WindowSpec spec = p % 2 == 1 ? WindowSpec::shifted(cfg_.window) : WindowSpec{cfg_.window, 0, 0};
    const MultiHeadAttention attn(prefix + ".attn", cfg_.attention());
    ad::Var h = block_norm1(prefix, cfg_.channels)(tape, store, x);
    x = ad::add(x, window_attention(tape, store, attn, cfg_.relative_bias ? prefix + ".rel_bias" : std::string(), h,
                                    rows, cols, spec, probe));
    x = prenorm_ffn(tape, store, prefix, x, cfg_.channels);
  }
  return x;
}

}  // namespace scenefuse
