// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "scenefuse/model.hpp"

#include <random>

#include "scenefuse/ops.hpp"

namespace scenefuse {

PreparedScene prepare_scene(const Scene& scene, const BevGridSpec& grid, int max_points) {
  PreparedScene p;
  p.scene = &scene;
  p.grid = grid;
  p.pillars = voxelize_pillars(scene.cloud, grid, max_points);
  p.projection = project_points(scene.cloud, scene.calibs);
  return p;
}

Model::Model(RunConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))),
      grid_(cfg_.grid()),
      point_encoder_("point_encoder", cfg_.channels),
      image_encoder_("image_encoder", cfg_.channels),
      p2g_("p2g", cfg_.hsf()),
      fuse_("fuse", cfg_.hsf()),
      g2r_("g2r", cfg_.hsf()),
      igf_("igf", cfg_.igf()),
      decoder_("decoder", cfg_.decoder()) {}

void Model::init(ParamStore& store, std::uint64_t seed) const {
  // One generator per group so toggling a group leaves the others unchanged.
  auto rng_for = [seed](std::uint64_t group) { return std::mt19937_64(seed * 0x9E3779B97F4A7C15ULL + group); };
  auto r1 = rng_for(1);
  point_encoder_.init(store, r1);
  if (cfg_.use_image_branch) {
    auto r2 = rng_for(2);
    image_encoder_.init(store, r2);
  }
  if (cfg_.use_hsf && cfg_.use_image_branch) {
    auto r3 = rng_for(3);
    p2g_.init(store, r3);
  }
  auto r4 = rng_for(4);
  fuse_.init(store, r4);
  if (cfg_.use_hsf) {
    auto r5 = rng_for(5);
    g2r_.init(store, r5);
  }
  if (cfg_.use_igf) {
    auto r6 = rng_for(6);
    igf_.init(store, r6);
  }
  auto r7 = rng_for(7);
  decoder_.init(store, r7);
}

ParamStore Model::initial_parameters() const {
  ParamStore store;
  init(store, cfg_.seed);
  return store;
}

Model::Output Model::forward(ad::Tape& tape, const ParamStore& store, const PreparedScene& scene) const {
  const int rows = grid_.rows, cols = grid_.cols;
  const PointContext ctx = scene.context();
  Output out;
  out.b_point = point_encoder_.forward(tape, store, ctx);
  if (cfg_.use_image_branch) {
    ImageFeatureMap images;
    images.stride = ImageEncoder::stride();
    for (const Tensor& img : scene.scene->images) images.maps.push_back(image_encoder_.forward(tape, store, img));
    out.b_image = cfg_.use_hsf ? p2g_.forward(tape, store, ctx, images) : pool_point_image_features(tape, ctx, images);
  } else {
    out.b_image = tape.constant(Tensor({grid_.num_cells(), cfg_.channels}));
  }
  out.b_fused = fuse_.forward(tape, store, out.b_image, out.b_point, rows, cols);
  out.b_prime = cfg_.use_hsf ? g2r_.forward(tape, store, out.b_fused, rows, cols) : out.b_fused;
  if (cfg_.use_igf) {
    out.igf = igf_.forward(tape, store, out.b_prime, rows, cols);
    out.b_hat = out.igf->scene;
  } else {
    out.b_hat = out.b_prime;
  }
  out.decoder = decoder_.forward(tape, store, out.b_hat, rows, cols);
  return out;
}

LossOutput Model::loss(const Output& out, const PreparedScene& scene) const {
  std::vector<const Heatmap*> heatmaps{&out.decoder.heatmap};
  if (out.igf) heatmaps.push_back(&out.igf->heatmap);
  return detection_loss(out.decoder, heatmaps, scene.scene->gt, grid_, cfg_.loss());
}

DetectionSet Model::detect(const ParamStore& store, const PreparedScene& scene) const {
  ad::Tape tape(false);
  const Output out = forward(tape, store, scene);
  const DetectionSet all = make_detections(out.decoder, grid_);
  DetectionSet kept;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all.boxes[i].score < cfg_.score_threshold) continue;
    kept.boxes.push_back(all.boxes[i]);
    kept.regression.push_back(all.regression[i]);
    kept.query_cells.push_back(all.query_cells[i]);
  }
  return kept;
}

}  // namespace scenefuse
