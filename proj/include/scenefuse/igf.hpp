// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <random>
#include <string>
#include <vector>

#include "scenefuse/attention.hpp"
#include "scenefuse/autodiff.hpp"
#include "scenefuse/layers.hpp"
#include "scenefuse/params.hpp"

// Instance-level fusion: pick the most salient BEV cells as instances, relate
// them, pull in local context, and write them back into the scene map.
namespace scenefuse {

struct IgfConfig {
  int channels = 32;
  int heads = 4;
  int num_instances = 200;
  int points = 16;
  int num_classes = 3;
  /// Sinusoidal (row, col) encoding on instance tokens.
  bool instance_posenc = true;
  /// Sinusoidal (row, col) encoding on grid queries in instance_to_scene.
  bool grid_posenc = true;
  /// Debug: instance_to_scene returns its input.
  bool zero_i2s = false;

  AttentionConfig attention() const { return {channels, heads}; }
  void validate() const;
};

/// Per-class centerness logits, {rows * cols, num_classes}.
struct Heatmap {
  ad::Var logits;
  int rows = 0;
  int cols = 0;
  int num_classes = 0;
};

struct Candidate {
  int class_id = 0;
  int row = 0;
  int col = 0;
  double score = 0.0;
  bool operator==(const Candidate&) const = default;
};

/// The k highest-scoring (class, row, col) triples of sigmoid(logits), with
/// logits {rows * cols, num_classes}. Ties go to the lexicographically
/// smaller (class, row, col). Throws ConfigError when k exceeds the number of
/// triples.
std::vector<Candidate> top_k_candidates(const Tensor& logits, int cols, int k);

struct InstanceSet {
  ad::Var features;                        // {K, C}
  std::vector<Eigen::Vector2d> positions;  // (row, col) in cells
  std::vector<double> scores;
  std::vector<int> class_ids;

  int size() const { return static_cast<int>(scores.size()); }
};

/// conv3x3 -> ReLU -> conv3x3 to num_classes logits; the last bias starts at
/// -2.19 (prior probability 0.1).
class HeatmapHead {
 public:
  HeatmapHead(std::string name, int channels, int num_classes);
  void init(ParamStore& store, std::mt19937_64& rng) const;
  Heatmap forward(ad::Tape& tape, const ParamStore& store, ad::Var map, int rows, int cols) const;

 private:
  std::string name_;
  int channels_;
  int num_classes_;
  Conv2d conv1_, conv2_;
};

class InstanceGuidedFusion {
 public:
  InstanceGuidedFusion(std::string name, IgfConfig cfg);
  void init(ParamStore& store, std::mt19937_64& rng) const;

  Heatmap heatmap(ad::Tape& tape, const ParamStore& store, ad::Var b_prime, int rows, int cols) const;

  /// Top-K cells of the heatmap, embedded with a linear layer. `fixed`
  /// replaces the top-K search (used to hold the selection constant).
  InstanceSet select_instances(ad::Tape& tape, const ParamStore& store, ad::Var b_prime, const Heatmap& heatmap,
                               const std::vector<Candidate>* fixed = nullptr) const;
  /// Pre-norm residual msa + feed-forward over the instance tokens.
  InstanceSet instance_self_attention(ad::Tape& tape, const ParamStore& store, const InstanceSet& q,
                                      AttentionProbe* probe = nullptr) const;
  /// 3x3 alignment conv of B'_F, then deformable attention from each
  /// instance position, added to the instance feature.
  InstanceSet aggregate_context(ad::Tape& tape, const ParamStore& store, const InstanceSet& q, ad::Var b_prime,
                                int rows, int cols) const;
  /// Every grid cell attends over the instances; residual onto B'_F.
  ad::Var instance_to_scene(ad::Tape& tape, const ParamStore& store, ad::Var b_prime, const InstanceSet& q, int rows,
                            int cols, AttentionProbe* probe = nullptr) const;

  struct Output {
    Heatmap heatmap;
    InstanceSet selected;
    InstanceSet aggregated;
    ad::Var scene;  // B^_F
  };
  Output forward(ad::Tape& tape, const ParamStore& store, ad::Var b_prime, int rows, int cols,
                 const std::vector<Candidate>* fixed = nullptr, AttentionProbe* i2s_probe = nullptr) const;

  const IgfConfig& config() const { return cfg_; }
  const std::string& name() const { return name_; }
  Linear embed() const { return {name_ + ".embed", cfg_.channels, cfg_.channels}; }
  Conv2d align() const { return {name_ + ".align", cfg_.channels, cfg_.channels}; }
  MultiHeadAttention instance_attention() const { return {name_ + ".instance.attn", cfg_.attention()}; }
  MultiHeadAttention scene_attention() const { return {name_ + ".i2s.attn", cfg_.attention()}; }
  DeformableAttention deformable() const { return {name_ + ".deform", cfg_.attention(), {cfg_.points}}; }

 private:
  std::string name_;
  IgfConfig cfg_;
  HeatmapHead head_;
};

/// Sinusoidal encoding of every cell of a rows x cols grid, {rows * cols, C}.
Tensor grid_encoding(int rows, int cols, int channels);

}  // namespace scenefuse
