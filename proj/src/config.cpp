// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "scenefuse/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "scenefuse/container.hpp"
#include "scenefuse/error.hpp"

namespace scenefuse {

std::vector<std::pair<std::string, ConfigField>> config_fields(RunConfig& c) {
  return {
      {"channels", &c.channels},
      {"heads", &c.heads},
      {"max_points", &c.max_points},
      {"window", &c.window},
      {"num_instances", &c.num_instances},
      {"deform_points", &c.deform_points},
      {"num_queries", &c.num_queries},
      {"p2g_blocks", &c.p2g_blocks},
      {"g2r_blocks", &c.g2r_blocks},
      {"half_extent", &c.half_extent},
      {"cell", &c.cell},
      {"z_min", &c.z_min},
      {"z_max", &c.z_max},
      {"use_hsf", &c.use_hsf},
      {"use_igf", &c.use_igf},
      {"use_image_branch", &c.use_image_branch},
      {"point_posenc", &c.point_posenc},
      {"p2g_residual", &c.p2g_residual},
      {"fuse_norm", &c.fuse_norm},
      {"relative_bias", &c.relative_bias},
      {"instance_posenc", &c.instance_posenc},
      {"grid_posenc", &c.grid_posenc},
      {"decoder_self_attention", &c.decoder_self_attention},
      {"w_cls", &c.w_cls},
      {"w_reg", &c.w_reg},
      {"w_heatmap", &c.w_heatmap},
      {"cost_cls", &c.cost_cls},
      {"cost_reg", &c.cost_reg},
      {"focal_gamma", &c.focal_gamma},
      {"focal_alpha", &c.focal_alpha},
      {"gaussian_min_overlap", &c.gaussian_min_overlap},
      {"steps", &c.steps},
      {"batch_size", &c.batch_size},
      {"lr", &c.lr},
      {"weight_decay", &c.weight_decay},
      {"beta1", &c.beta1},
      {"beta2", &c.beta2},
      {"adam_eps", &c.adam_eps},
      {"grad_clip", &c.grad_clip},
      {"warmup_fraction", &c.warmup_fraction},
      {"div_factor", &c.div_factor},
      {"final_div_factor", &c.final_div_factor},
      {"log_every", &c.log_every},
      {"seed", &c.seed},
      {"score_threshold", &c.score_threshold},
      {"data", &c.data},
      {"split", &c.split},
      {"num_scenes", &c.num_scenes},
      {"num_val", &c.num_val},
      {"data_seed", &c.data_seed},
      {"min_boxes", &c.min_boxes},
      {"max_boxes", &c.max_boxes},
      {"num_cameras", &c.num_cameras},
      {"image_width", &c.image_width},
      {"image_height", &c.image_height},
      {"yaw_range", &c.yaw_range},
      {"calib_jitter", &c.calib_jitter},
  };
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (auto& [name, field] : config_fields(cfg)) {
    if (name != key) continue;
    const auto bad = [&](const char* type) {
      return ConfigError("config key '" + key + "': expected " + type + ", got '" + value + "'");
    };
    if (auto* p = std::get_if<int*>(&field)) {
      int v = 0;
      auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || end != value.data() + value.size()) throw bad("an integer");
      **p = v;
    } else if (auto* p = std::get_if<std::uint64_t*>(&field)) {
      std::uint64_t v = 0;
      auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || end != value.data() + value.size()) throw bad("an unsigned integer");
      **p = v;
    } else if (auto* p = std::get_if<double*>(&field)) {
      try {
        **p = parse_double(value);
      } catch (const FormatError&) {
        throw bad("a number");
      }
    } else if (auto* p = std::get_if<bool*>(&field)) {
      if (value == "true" || value == "1") {
        **p = true;
      } else if (value == "false" || value == "0") {
        **p = false;
      } else {
        throw bad("true or false");
      }
    } else {
      *std::get<std::string*>(field) = value;
    }
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_run_config(std::string_view text, const std::string& source, RunConfig base) {
  std::vector<std::pair<std::string, std::string>> entries;
  try {
    entries = parse_key_values(text, source);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  for (const auto& [k, v] : entries) set_config_value(base, k, v);
  base.validate();
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

std::string format_run_config(const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::ostringstream out;
  for (auto& [name, field] : config_fields(copy)) {
    out << name << " = ";
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, double>) {
            out << format_double(*p);
          } else if constexpr (std::is_same_v<T, bool>) {
            out << (*p ? "true" : "false");
          } else {
            out << *p;
          }
        },
        field);
    out << "\n";
  }
  return out.str();
}

void RunConfig::validate() const {
  hsf().validate();
  igf().validate();
  if (channels % 4 != 0) throw ConfigError("channels must be a multiple of 4 (sinusoidal encodings)");
  if (num_queries < 1) throw ConfigError("num_queries must be >= 1");
  if (steps < 0 || batch_size < 1 || log_every < 1) throw ConfigError("steps >= 0, batch_size >= 1, log_every >= 1");
  if (!(lr > 0.0) || weight_decay < 0.0 || !(div_factor > 0.0) || !(final_div_factor > 0.0)) {
    throw ConfigError("optimizer settings out of range");
  }
  if (warmup_fraction < 0.0 || warmup_fraction > 1.0) throw ConfigError("warmup_fraction must lie in [0, 1]");
  if (!(z_max > z_min)) throw ConfigError("z_max must exceed z_min");
  const BevGridSpec g = grid();
  if (window > g.rows) throw ConfigError("window exceeds the BEV grid");
  if (num_instances > g.num_cells() * kNumClasses || num_queries > g.num_cells() * kNumClasses) {
    throw ConfigError("more instances or queries than grid candidates");
  }
  if (grad_clip < 0.0) throw ConfigError("grad_clip must be >= 0 (0 disables)");
}

BevGridSpec RunConfig::grid() const { return BevGridSpec::square(half_extent, cell, z_min, z_max); }

HsfConfig RunConfig::hsf() const {
  HsfConfig h;
  h.channels = channels;
  h.heads = heads;
  h.max_points = max_points;
  h.window = window;
  h.g2r_blocks = g2r_blocks;
  h.p2g_blocks = p2g_blocks;
  h.point_posenc = point_posenc;
  h.p2g_residual = p2g_residual;
  h.fuse_norm = fuse_norm;
  h.relative_bias = relative_bias;
  return h;
}

IgfConfig RunConfig::igf() const {
  IgfConfig i;
  i.channels = channels;
  i.heads = heads;
  i.num_instances = num_instances;
  i.points = deform_points;
  i.num_classes = kNumClasses;
  i.instance_posenc = instance_posenc;
  i.grid_posenc = grid_posenc;
  return i;
}

DecoderConfig RunConfig::decoder() const {
  DecoderConfig d;
  d.channels = channels;
  d.heads = heads;
  d.num_classes = kNumClasses;
  d.num_queries = num_queries;
  d.self_attention = decoder_self_attention;
  return d;
}

LossConfig RunConfig::loss() const {
  LossConfig l;
  l.w_cls = w_cls;
  l.w_reg = w_reg;
  l.w_heatmap = w_heatmap;
  l.cost_cls = cost_cls;
  l.cost_reg = cost_reg;
  l.focal_gamma = focal_gamma;
  l.focal_alpha = focal_alpha;
  l.min_overlap = gaussian_min_overlap;
  return l;
}

SceneSpec RunConfig::scene_spec() const {
  SceneSpec s;
  s.seed = data_seed;
  s.min_boxes = min_boxes;
  s.max_boxes = max_boxes;
  s.half_extent = half_extent;
  s.num_cameras = num_cameras;
  s.image_width = image_width;
  s.image_height = image_height;
  s.yaw_range = yaw_range;
  s.calib_jitter = calib_jitter;
  return s;
}

}  // namespace scenefuse
