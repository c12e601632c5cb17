// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "scenefuse/attention.hpp"
#include "scenefuse/autodiff.hpp"
#include "scenefuse/geometry.hpp"
#include "scenefuse/layers.hpp"
#include "scenefuse/params.hpp"

// Scene-level fusion: image features lifted to BEV cells through the points
// of each pillar, fused with a LiDAR BEV map, then refined with window
// attention.
namespace scenefuse {

struct HsfConfig {
  int channels = 32;
  int heads = 4;
  int max_points = 20;
  int window = 6;
  /// Number of (unshifted, shifted) window-attention pairs.
  int g2r_blocks = 1;
  int p2g_blocks = 1;
  /// Adds a learned encoding of (dx, dy, z, intensity) to point tokens.
  bool point_posenc = true;
  /// Wraps point attention in a pre-norm residual block with feed-forward.
  /// Off gives the literal msa then max-pool.
  bool p2g_residual = true;
  bool fuse_norm = true;
  bool relative_bias = true;
  /// Debug: skip the window attention passes.
  bool g2r_identity = false;

  AttentionConfig attention() const { return {channels, heads}; }
  void validate() const;
};

/// Per-camera perspective feature maps, each {H_f, W_f, C}.
struct ImageFeatureMap {
  std::vector<ad::Var> maps;
  int stride = 4;
};

/// Everything P2G needs to know about the points of one scene.
struct PointContext {
  const PointCloud* cloud = nullptr;
  const PillarAssignment* pillars = nullptr;
  const ProjectionResult* projection = nullptr;
  const BevGridSpec* grid = nullptr;
};

/// Three-layer strided convolutional encoder over {H, W, 3} images; total
/// stride 4.
class ImageEncoder {
 public:
  ImageEncoder(std::string name, int channels);
  void init(ParamStore& store, std::mt19937_64& rng) const;
  ad::Var forward(ad::Tape& tape, const ParamStore& store, const Tensor& image) const;
  static constexpr int stride() { return 4; }

 private:
  std::string name_;
  int channels_;
  Conv2d conv1_, conv2_, conv3_;
};

/// Pillar encoder producing B_P {rows * cols, C}: a per-point linear layer
/// max-pooled per pillar, concatenated with occupancy statistics, scattered
/// to BEV and passed through two 3x3 convolutions.
class PointEncoder {
 public:
  static constexpr int kPointFeatures = 4;
  static constexpr int kPillarStats = 3;

  PointEncoder(std::string name, int channels);
  void init(ParamStore& store, std::mt19937_64& rng) const;
  ad::Var forward(ad::Tape& tape, const ParamStore& store, const PointContext& ctx) const;

 private:
  std::string name_;
  int channels_;
  Linear point_fc_;
  Conv2d conv1_, conv2_;
};

/// Per-point geometric descriptors (dx, dy) in cells from the pillar center,
/// normalized z and intensity, one row per listed point.
Tensor point_descriptors(const PointContext& ctx, std::span<const int> pillar_of, std::span<const int> points);

/// Visible points of every pillar, in slot order. `offsets` has one entry
/// per pillar plus one.
struct VisiblePoints {
  std::vector<int> points;
  std::vector<int> pillar_of;
  std::vector<int> offsets;
};
VisiblePoints visible_points(const PointContext& ctx);

/// Bilinear image features of the listed points, {n, C}; each row is
/// sampled from the camera the point projects into.
ad::Var gather_point_image_features(ad::Tape& tape, const ImageFeatureMap& images, const ProjectionResult& projection,
                                    std::span<const int> points);

/// Point-to-Grid: attention among the visible points of each pillar, max-pool,
/// scatter to the pillar's cell. Cells without visible points are zero.
class PointToGrid {
 public:
  PointToGrid(std::string name, HsfConfig cfg);
  void init(ParamStore& store, std::mt19937_64& rng) const;
  ad::Var forward(ad::Tape& tape, const ParamStore& store, const PointContext& ctx, const ImageFeatureMap& images,
                  AttentionProbe* probe = nullptr) const;

  const MultiHeadAttention& attention(int block) const { return attn_[static_cast<std::size_t>(block)]; }

 private:
  std::string name_;
  HsfConfig cfg_;
  std::vector<MultiHeadAttention> attn_;
  Linear posenc_;
};

/// Parameter-free lift used when scene-level attention is disabled: the
/// image features of each pillar's visible points are max-pooled.
ad::Var pool_point_image_features(ad::Tape& tape, const PointContext& ctx, const ImageFeatureMap& images);

/// fuse_bev: concat(B_I, B_P) -> 3x3 conv (2C -> C) -> [LayerNorm] -> ReLU.
class FuseBev {
 public:
  FuseBev(std::string name, HsfConfig cfg);
  void init(ParamStore& store, std::mt19937_64& rng) const;
  /// Both inputs {rows * cols, C}.
  ad::Var forward(ad::Tape& tape, const ParamStore& store, ad::Var b_image, ad::Var b_point, int rows, int cols) const;
  const Conv2d& conv() const { return conv_; }

 private:
  std::string name_;
  HsfConfig cfg_;
  Conv2d conv_;
};

/// Grid-to-Region: pre-norm window attention (unshifted, then shifted by
/// half a window) with feed-forward blocks.
class GridToRegion {
 public:
  GridToRegion(std::string name, HsfConfig cfg);
  void init(ParamStore& store, std::mt19937_64& rng) const;
  ad::Var forward(ad::Tape& tape, const ParamStore& store, ad::Var b_fused, int rows, int cols,
                  AttentionProbe* probe = nullptr) const;

  /// Name prefix of pass `pass` (0 .. 2 * blocks - 1; odd passes are shifted).
  std::string pass_name(int pass) const;

 private:
  std::string name_;
  HsfConfig cfg_;
};

/// x + f(LayerNorm(x)) followed by x + FFN(LayerNorm(x)) with hidden 2C.
/// `prefix` owns `.norm1`, `.norm2`, `.ffn`.
void init_prenorm_block(ParamStore& store, std::mt19937_64& rng, const std::string& prefix, int channels);
ad::Var prenorm_ffn(ad::Tape& tape, const ParamStore& store, const std::string& prefix, ad::Var x, int channels);
LayerNorm block_norm1(const std::string& prefix, int channels);

}  // namespace scenefuse
