// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <array>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "scenefuse/attention.hpp"
#include "scenefuse/autodiff.hpp"
#include "scenefuse/geometry.hpp"
#include "scenefuse/igf.hpp"
#include "scenefuse/layers.hpp"
#include "scenefuse/params.hpp"

namespace scenefuse {

struct Box3D {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();  // l, w, h
  double yaw = 0.0;
  int class_id = 0;
  double score = 1.0;

  /// Throws ConfigError for non-positive sizes or yaw outside [-pi, pi).
  void validate() const;
  bool operator==(const Box3D&) const = default;
};

/// Wraps into [-pi, pi).
double wrap_angle(double a);

/// Regression parameterization relative to a query cell:
/// (dx, dy in cells from the cell center, z, log l, log w, log h, sin, cos).
using BoxCode = std::array<double, 8>;
BoxCode encode_box(const Box3D& box, GridIndex cell, const BevGridSpec& grid);
/// Inverse of encode_box. atan2(0, 0) is taken as yaw 0.
Box3D decode_box(const BoxCode& code, GridIndex cell, const BevGridSpec& grid, int class_id, double score);

struct DetectionSet {
  std::vector<Box3D> boxes;
  std::vector<BoxCode> regression;
  std::vector<GridIndex> query_cells;

  std::size_t size() const { return boxes.size(); }
};

struct MatchResult {
  /// (prediction, ground truth), ordered by ground-truth index.
  std::vector<std::pair<int, int>> pairs;
  std::vector<int> unmatched;
};

/// Minimum-cost assignment of every column to a distinct row of a rows x
/// cols cost matrix (cols <= rows). Returns the row of each column.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

/// Globally optimal matching for a predictions x ground-truth cost matrix.
/// Throws ConfigError when there are more ground truths than predictions.
MatchResult hungarian_match(const Eigen::MatrixXd& cost);

/// Largest radius (in cells) for which a box of l x w cells shifted or
/// resized by that amount in each of the three corner configurations keeps
/// IoU >= min_overlap.
double gaussian_radius(double length_cells, double width_cells, double min_overlap = 0.1);

/// Per-class centerness targets {rows * cols, num_classes}. Each box renders
/// exp(-(dr^2 + dc^2) / (2 sigma^2)) within +-r cells of its center cell,
/// r = max(1, floor(radius)), sigma = (2r + 1) / 6; overlaps take the max.
Tensor gaussian_targets(const std::vector<Box3D>& gt, const BevGridSpec& grid, int num_classes,
                        double min_overlap = 0.1);

namespace ad {
/// Sum of sigmoid focal loss over all entries of logits with 0/1 targets.
/// alpha < 0 disables class balancing.
Var sigmoid_focal_loss(Var logits, const Tensor& targets, double gamma, double alpha);
/// Sum of the penalty-reduced focal loss against Gaussian targets; positives
/// are the entries equal to 1.
Var penalty_reduced_focal_loss(Var logits, const Tensor& targets, double alpha = 2.0, double beta = 4.0);
/// Sum of |pred - target| over the rows with row_mask set.
Var masked_l1(Var pred, const Tensor& target, const std::vector<std::uint8_t>& row_mask);
}  // namespace ad

struct DecoderConfig {
  int channels = 32;
  int heads = 4;
  int num_classes = 3;
  int num_queries = 200;
  bool self_attention = true;

  AttentionConfig attention() const { return {channels, heads}; }
};

/// Query cells for decoding: 3x3 local maxima of the sigmoid heatmap, best
/// first, padded with the remaining cells when there are too few peaks.
std::vector<Candidate> select_queries(const Tensor& heatmap_logits, int rows, int cols, int n);

class Decoder {
 public:
  Decoder(std::string name, DecoderConfig cfg);
  void init(ParamStore& store, std::mt19937_64& rng) const;

  struct Output {
    Heatmap heatmap;
    std::vector<Candidate> queries;
    ad::Var cls_logits;  // {N, num_classes}
    ad::Var regression;  // {N, 8}
  };
  /// b_hat {rows * cols, C}. `fixed` overrides the query selection.
  Output forward(ad::Tape& tape, const ParamStore& store, ad::Var b_hat, int rows, int cols,
                 const std::vector<Candidate>* fixed = nullptr) const;

  const DecoderConfig& config() const { return cfg_; }

 private:
  std::string name_;
  DecoderConfig cfg_;
  HeatmapHead head_;
};

/// Boxes of every query: class = argmax logit, score = its sigmoid.
DetectionSet make_detections(const Decoder::Output& out, const BevGridSpec& grid);

struct LossConfig {
  double w_cls = 1.0;
  double w_reg = 0.25;
  double w_heatmap = 1.0;
  double cost_cls = 1.0;
  double cost_reg = 0.25;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double min_overlap = 0.1;
};

/// Matching cost, predictions x ground truths:
/// cost_cls * (1 - p_class(gt)) + cost_reg * L1(regression, encoded gt).
Eigen::MatrixXd matching_cost(const Decoder::Output& out, const std::vector<Box3D>& gt, const BevGridSpec& grid,
                              const LossConfig& cfg);

struct LossOutput {
  ad::Var total;
  double cls = 0.0;
  double reg = 0.0;
  double heatmap = 0.0;
  MatchResult match;
};

/// Focal classification over all queries, L1 on matched regressions and
/// penalty-reduced focal on every supplied heatmap, each normalized by
/// max(1, count). `fixed_match` skips the Hungarian step.
LossOutput detection_loss(const Decoder::Output& out, const std::vector<const Heatmap*>& heatmaps,
                          const std::vector<Box3D>& gt, const BevGridSpec& grid, const LossConfig& cfg,
                          const MatchResult* fixed_match = nullptr);

}  // namespace scenefuse
