// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scenefuse/config.hpp"
#include "scenefuse/detection.hpp"
#include "scenefuse/hsf.hpp"
#include "scenefuse/igf.hpp"
#include "scenefuse/synthscene.hpp"

namespace scenefuse {

/// Scene geometry computed once and reused across steps.
struct PreparedScene {
  const Scene* scene = nullptr;
  BevGridSpec grid;
  PillarAssignment pillars;
  ProjectionResult projection;

  PointContext context() const { return {&scene->cloud, &pillars, &projection, &grid}; }
};

PreparedScene prepare_scene(const Scene& scene, const BevGridSpec& grid, int max_points);

/// The full detector. Parameter groups (first name component):
/// point_encoder, image_encoder, p2g, fuse, g2r, igf, decoder.
class Model {
 public:
  explicit Model(RunConfig cfg);

  void init(ParamStore& store, std::uint64_t seed) const;
  ParamStore initial_parameters() const;

  struct Output {
    ad::Var b_point;
    ad::Var b_image;
    ad::Var b_fused;
    ad::Var b_prime;
    ad::Var b_hat;
    std::optional<InstanceGuidedFusion::Output> igf;
    Decoder::Output decoder;
  };
  Output forward(ad::Tape& tape, const ParamStore& store, const PreparedScene& scene) const;
  LossOutput loss(const Output& out, const PreparedScene& scene) const;
  /// Boxes scoring at least the configured threshold.
  DetectionSet detect(const ParamStore& store, const PreparedScene& scene) const;

  const RunConfig& config() const { return cfg_; }
  const BevGridSpec& grid() const { return grid_; }

 private:
  RunConfig cfg_;
  BevGridSpec grid_;
  PointEncoder point_encoder_;
  ImageEncoder image_encoder_;
  PointToGrid p2g_;
  FuseBev fuse_;
  GridToRegion g2r_;
  InstanceGuidedFusion igf_;
  Decoder decoder_;
};

}  // namespace scenefuse
