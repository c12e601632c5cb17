// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "scenefuse/detection.hpp"
#include "scenefuse/geometry.hpp"
#include "scenefuse/hsf.hpp"
#include "scenefuse/igf.hpp"
#include "scenefuse/synthscene.hpp"

namespace scenefuse {

/// Every knob of a run. Serialized as flat `key = value` text; parsing
/// rejects unknown keys and malformed values.
struct RunConfig {
  // Model.
  int channels = 32;
  int heads = 4;
  int max_points = 20;
  int window = 6;
  int num_instances = 32;
  int deform_points = 8;
  int num_queries = 64;
  int p2g_blocks = 1;
  int g2r_blocks = 1;
  double half_extent = 18.0;
  double cell = 0.6;
  double z_min = -5.0;
  double z_max = 3.0;
  bool use_hsf = true;
  bool use_igf = true;
  bool use_image_branch = true;
  bool point_posenc = true;
  bool p2g_residual = true;
  bool fuse_norm = true;
  bool relative_bias = true;
  bool instance_posenc = true;
  bool grid_posenc = true;
  bool decoder_self_attention = true;

  // Loss and matching.
  double w_cls = 1.0;
  double w_reg = 0.25;
  double w_heatmap = 1.0;
  double cost_cls = 1.0;
  double cost_reg = 0.25;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double gaussian_min_overlap = 0.1;

  // Optimization.
  int steps = 500;
  int batch_size = 1;
  double lr = 2e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 10.0;
  double warmup_fraction = 0.3;
  double div_factor = 10.0;
  double final_div_factor = 100.0;
  int log_every = 10;
  std::uint64_t seed = 0;

  // Evaluation.
  double score_threshold = 0.05;

  // Data.
  std::string data;
  std::string split = "train";
  int num_scenes = 20;
  int num_val = 0;
  std::uint64_t data_seed = 0;
  int min_boxes = 3;
  int max_boxes = 8;
  int num_cameras = 6;
  int image_width = 128;
  int image_height = 64;
  double yaw_range = 3.141592653589793;
  double calib_jitter = 0.0;

  /// Throws ConfigError when values are inconsistent.
  void validate() const;

  BevGridSpec grid() const;
  HsfConfig hsf() const;
  IgfConfig igf() const;
  DecoderConfig decoder() const;
  LossConfig loss() const;
  SceneSpec scene_spec() const;

  bool operator==(const RunConfig&) const = default;
};

using ConfigField = std::variant<int*, double*, bool*, std::string*, std::uint64_t*>;
std::vector<std::pair<std::string, ConfigField>> config_fields(RunConfig& cfg);

/// Applies `key = value` text on top of `base`.
RunConfig parse_run_config(std::string_view text, const std::string& source, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path);
std::string format_run_config(const RunConfig& cfg);
/// Sets one key from its text form.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace scenefuse
