// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "scenefuse/detection.hpp"
#include "scenefuse/error.hpp"
#include "scenefuse_test/fixtures.hpp"
#include "scenefuse_test/oracles.hpp"

namespace scenefuse {
namespace {

using selftest::random_tensor;

Box3D box_at(double x, double y, double l, double w, int cls = 0, double yaw = 0.0) {
  Box3D b;
  b.center = {x, y, 0.8};
  b.size = {l, w, 1.6};
  b.yaw = yaw;
  b.class_id = cls;
  return b;
}

TEST(GaussianTargets, SinglePeakAndNeighbours) {
  const BevGridSpec g = BevGridSpec::square(6.0, 1.0);
  const Box3D b = box_at(0.5, 0.5, 1.0, 1.0);  // cell (6, 6)
  const Tensor t = gaussian_targets({b}, g, 2);
  // A 1 x 1 cell box has radius < 1, so r = 1 and sigma = 0.5.
  const double sigma = 0.5;
  EXPECT_EQ(t.at(6 * 12 + 6, 0), 1.0);
  for (const auto& [dr, dc] : {std::pair{-1, 0}, std::pair{1, 0}, std::pair{0, -1}, std::pair{0, 1}})
    EXPECT_NEAR(t.at((6 + dr) * 12 + 6 + dc, 0), std::exp(-1.0 / (2 * sigma * sigma)), 1e-15);
  EXPECT_NEAR(t.at(7 * 12 + 7, 0), std::exp(-2.0 / (2 * sigma * sigma)), 1e-15);
  EXPECT_EQ(t.at(8 * 12 + 6, 0), 0.0);
  for (int cell = 0; cell < 144; ++cell) EXPECT_EQ(t.at(cell, 1), 0.0);
}

TEST(GaussianTargets, OverlappingBoxesTakeTheMax) {
  const BevGridSpec g = BevGridSpec::square(6.0, 1.0);
  const Tensor a = gaussian_targets({box_at(0.5, 0.5, 4.0, 2.0)}, g, 1);
  const Tensor b = gaussian_targets({box_at(0.7, 0.2, 2.0, 2.0)}, g, 1);
  const Tensor both = gaussian_targets({box_at(0.5, 0.5, 4.0, 2.0), box_at(0.7, 0.2, 2.0, 2.0)}, g, 1);
  int peaks = 0;
  for (int cell = 0; cell < 144; ++cell) {
    EXPECT_EQ(both.at(cell, 0), std::max(a.at(cell, 0), b.at(cell, 0)));
    EXPECT_LE(both.at(cell, 0), 1.0);
    peaks += both.at(cell, 0) == 1.0;
  }
  EXPECT_EQ(peaks, 1);
}

TEST(GaussianTargets, SigmaFollowsRadiusOfCarSizedBox) {
  const BevGridSpec g = BevGridSpec::square(18.0, 0.6);
  const double radius = gaussian_radius(4.0 / 0.6, 2.0 / 0.6, 0.1);
  EXPECT_NEAR(radius, selftest::radius_by_bisection(4.0 / 0.6, 2.0 / 0.6, 0.1), 1e-9);
  const int r = std::max(1, static_cast<int>(std::floor(radius)));
  const double sigma = (2.0 * r + 1.0) / 6.0;
  const Box3D b = box_at(0.3, 0.3, 4.0, 2.0);  // center of cell (30, 30)
  const Tensor t = gaussian_targets({b}, g, 1);
  EXPECT_EQ(t.at(30 * 60 + 30, 0), 1.0);
  EXPECT_NEAR(t.at(30 * 60 + 31, 0), std::exp(-1.0 / (2 * sigma * sigma)), 1e-15);
  EXPECT_GT(t.at(30 * 60 + 30 + r, 0), 0.0);
  EXPECT_EQ(t.at(30 * 60 + 30 + r + 1, 0), 0.0);
}

TEST(GaussianRadius, MonotoneInOverlap) {
  double prev = 1e9;
  for (double o = 0.05; o < 0.95; o += 0.05) {
    const double r = gaussian_radius(5.0, 3.0, o);
    EXPECT_LT(r, prev);
    prev = r;
  }
}

TEST(BoxCoding, ZeroRegressionDecodesToCellCenter) {
  const BevGridSpec g = BevGridSpec::square(18.0, 0.6);
  const Box3D b = decode_box(BoxCode{}, {10, 20}, g, 2, 0.7);
  const Eigen::Vector2d c = g.cell_center(10, 20);
  EXPECT_DOUBLE_EQ(b.center.x(), c.x());
  EXPECT_DOUBLE_EQ(b.center.y(), c.y());
  EXPECT_EQ(b.center.z(), 0.0);
  EXPECT_EQ(b.size, Eigen::Vector3d::Ones());
  EXPECT_EQ(b.yaw, 0.0);
  EXPECT_EQ(b.class_id, 2);
  EXPECT_EQ(b.score, 0.7);
}

TEST(BoxCoding, BackwardsHeadingWrapsToMinusPi) {
  BoxCode code{};
  code[6] = 0.0;
  code[7] = -1.0;
  EXPECT_EQ(decode_box(code, {0, 0}, BevGridSpec{}, 0, 1.0).yaw, -M_PI);
  EXPECT_EQ(wrap_angle(M_PI), -M_PI);
  EXPECT_NEAR(wrap_angle(3 * M_PI / 2), -M_PI / 2, 1e-15);
}

TEST(BoxCoding, RoundTrip) {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(-1.0, 1.0), yaw(-M_PI, M_PI);
  const BevGridSpec g = BevGridSpec::square(18.0, 0.6);
  for (int i = 0; i < 200; ++i) {
    const Box3D b = box_at(10 * u(rng), 10 * u(rng), 1.0 + u(rng) * 0.5, 2.0 + u(rng), 1, yaw(rng));
    const GridIndex cell{30 + static_cast<int>(5 * u(rng)), 30 + static_cast<int>(5 * u(rng))};
    const Box3D back = decode_box(encode_box(b, cell, g), cell, g, 1, 1.0);
    EXPECT_LT((back.center - b.center).norm(), 1e-9);
    EXPECT_LT((back.size - b.size).norm(), 1e-9);
    EXPECT_LT(std::abs(wrap_angle(back.yaw - b.yaw)), 1e-9);
  }
}

TEST(Hungarian, OneGroundTruthPicksCheaperPrediction) {
  Eigen::MatrixXd cost(2, 1);
  cost << 0.9, 0.1;
  const MatchResult m = hungarian_match(cost);
  ASSERT_EQ(m.pairs.size(), 1u);
  EXPECT_EQ(m.pairs[0], (std::pair<int, int>{1, 0}));
  EXPECT_EQ(m.unmatched, (std::vector<int>{0}));
}

TEST(Hungarian, RecoversPermutation) {
  const std::vector<int> perm{2, 0, 3, 1};
  Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(4, 4, 5.0);
  for (int g = 0; g < 4; ++g) cost(perm[static_cast<std::size_t>(g)], g) = 1.0;
  const MatchResult m = hungarian_match(cost);
  ASSERT_EQ(m.pairs.size(), 4u);
  for (int g = 0; g < 4; ++g) EXPECT_EQ(m.pairs[static_cast<std::size_t>(g)], (std::pair<int, int>{perm[static_cast<std::size_t>(g)], g}));
  EXPECT_TRUE(m.unmatched.empty());
}

TEST(Hungarian, BeatsGreedyWhenGreedyIsWrong) {
  Eigen::MatrixXd cost(2, 2);
  cost << 1.0, 2.0, 2.0, 10.0;  // greedy takes (0, 0) then pays 10
  const MatchResult m = hungarian_match(cost);
  EXPECT_EQ(m.pairs[0], (std::pair<int, int>{1, 0}));
  EXPECT_EQ(m.pairs[1], (std::pair<int, int>{0, 1}));
}

TEST(Hungarian, MoreGroundTruthThanPredictionsThrows) {
  EXPECT_THROW(hungarian_match(Eigen::MatrixXd::Zero(1, 2)), ConfigError);
}

TEST(FocalLoss, KnownValueAtZeroLogit) {
  ad::Tape tape(false);
  const Tensor targets({1, 2}, std::vector<double>{1.0, 0.0});
  const double v = ad::sigmoid_focal_loss(tape.constant(Tensor({1, 2})), targets, 2.0, 0.25).value()[0];
  EXPECT_NEAR(v, 0.25 * 0.25 * std::log(2.0) + 0.75 * 0.25 * std::log(2.0), 1e-15);
}

TEST(PenaltyReducedFocal, PerfectLogitsGiveNearZero) {
  const BevGridSpec g = BevGridSpec::square(3.0, 1.0);
  const Tensor t = gaussian_targets({box_at(0.5, 0.5, 2.0, 2.0)}, g, 1);
  Tensor logits(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) logits[i] = t[i] == 1.0 ? 40.0 : -40.0;
  ad::Tape tape(false);
  EXPECT_LT(ad::penalty_reduced_focal_loss(tape.constant(logits), t).value()[0], 1e-12);
}

// A decoder output whose query i sits at `cells[i]`.
struct HandOutput {
  ad::Tape tape{false};
  Decoder::Output out;
  BevGridSpec grid = BevGridSpec::square(6.0, 1.0);

  HandOutput(const std::vector<GridIndex>& cells, const Tensor& cls, const Tensor& reg, const Tensor& heat) {
    for (const GridIndex& c : cells) out.queries.push_back({0, c.row, c.col, 0.5});
    out.cls_logits = tape.constant(cls);
    out.regression = tape.constant(reg);
    out.heatmap = {tape.constant(heat), grid.rows, grid.cols, cls.dim(1)};
  }
};

TEST(DetectionLoss, PerfectPredictionIsNearZero) {
  const BevGridSpec g = BevGridSpec::square(6.0, 1.0);
  const std::vector<Box3D> gt{box_at(0.5, 0.5, 4.0, 2.0, 0, 0.4), box_at(-3.2, 2.7, 1.0, 0.8, 1, -1.0)};
  const std::vector<GridIndex> cells{{6, 6}, {0, 0}, {8, 2}, {3, 3}};
  Tensor cls({4, 3}, -40.0), reg({4, 8});
  cls.at(0, 0) = 40.0;
  cls.at(2, 1) = 40.0;
  for (int q : {0, 2}) {
    const BoxCode code = encode_box(gt[q == 0 ? 0 : 1], cells[static_cast<std::size_t>(q)], g);
    for (int k = 0; k < 8; ++k) reg.at(q, k) = code[static_cast<std::size_t>(k)];
  }
  const Tensor t = gaussian_targets(gt, g, 3);
  Tensor heat(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) heat[i] = t[i] == 1.0 ? 40.0 : -40.0;
  HandOutput h(cells, cls, reg, heat);
  const LossOutput l = detection_loss(h.out, {&h.out.heatmap}, gt, g, LossConfig{});
  EXPECT_LT(l.total.value()[0], 1e-3);
  ASSERT_EQ(l.match.pairs.size(), 2u);
  EXPECT_EQ(l.match.pairs[0], (std::pair<int, int>{0, 0}));
  EXPECT_EQ(l.match.pairs[1], (std::pair<int, int>{2, 1}));
}

TEST(DetectionLoss, DoublingRegressionWeightDoublesRegressionTerm) {
  std::mt19937_64 rng(52);
  const BevGridSpec g = BevGridSpec::square(6.0, 1.0);
  const std::vector<Box3D> gt{box_at(0.5, 0.5, 4.0, 2.0), box_at(-3.2, 2.7, 1.0, 0.8, 1)};
  HandOutput h({{6, 6}, {0, 0}, {8, 2}}, random_tensor({3, 3}, rng), random_tensor({3, 8}, rng),
               random_tensor({144, 3}, rng));
  LossConfig a, b;
  b.w_reg = 2.0 * a.w_reg;
  const LossOutput la = detection_loss(h.out, {&h.out.heatmap}, gt, g, a, nullptr);
  const LossOutput lb = detection_loss(h.out, {&h.out.heatmap}, gt, g, b, &la.match);
  EXPECT_NEAR(lb.reg, 2.0 * la.reg, 1e-12);
  EXPECT_NEAR(lb.cls, la.cls, 1e-15);
  EXPECT_NEAR(lb.total.value()[0] - la.total.value()[0], la.reg, 1e-12);
}

TEST(DetectionLoss, NoGroundTruthOnlyPushesScoresDown) {
  std::mt19937_64 rng(53);
  HandOutput h({{1, 1}, {2, 2}}, random_tensor({2, 3}, rng), random_tensor({2, 8}, rng), random_tensor({144, 3}, rng));
  const LossOutput l = detection_loss(h.out, {&h.out.heatmap}, {}, h.grid, LossConfig{});
  EXPECT_EQ(l.reg, 0.0);
  EXPECT_GT(l.cls, 0.0);
  EXPECT_TRUE(l.match.pairs.empty());
}

TEST(SelectQueries, PeaksFirstThenPadding) {
  Tensor logits({5 * 5, 1}, -3.0);
  logits.at(2 * 5 + 2, 0) = 2.0;
  logits.at(2 * 5 + 3, 0) = 1.0;  // neighbour of the peak, not a local max
  logits.at(0, 0) = 0.5;
  const std::vector<Candidate> q = select_queries(logits, 5, 5, 4);
  ASSERT_EQ(q.size(), 4u);
  EXPECT_EQ(q[0].row * 5 + q[0].col, 12);
  EXPECT_EQ(q[1].row * 5 + q[1].col, 0);
  std::set<int> cells;
  for (const Candidate& c : q) cells.insert(c.row * 5 + c.col);
  EXPECT_EQ(cells.size(), 4u);
}

TEST(MakeDetections, ArgmaxClassAndSigmoidScore) {
  Tensor cls({1, 3}, std::vector<double>{-1.0, 2.0, 0.5});
  HandOutput h({{4, 5}}, cls, Tensor({1, 8}), Tensor({144, 3}));
  const DetectionSet d = make_detections(h.out, h.grid);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.boxes[0].class_id, 1);
  EXPECT_NEAR(d.boxes[0].score, 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
  EXPECT_EQ(d.query_cells[0], (GridIndex{4, 5}));
}

TEST(Decoder, ForwardShapes) {
  std::mt19937_64 rng(54);
  DecoderConfig cfg;
  cfg.channels = 8;
  cfg.heads = 2;
  cfg.num_queries = 5;
  const Decoder dec("decoder", cfg);
  ParamStore store;
  dec.init(store, rng);
  ad::Tape tape(false);
  const Decoder::Output out = dec.forward(tape, store, tape.constant(random_tensor({36, 8}, rng)), 6, 6);
  EXPECT_EQ(out.queries.size(), 5u);
  EXPECT_EQ(out.cls_logits.value().shape(), (Shape{5, 3}));
  EXPECT_EQ(out.regression.value().shape(), (Shape{5, 8}));
}

}  // namespace
}  // namespace scenefuse
