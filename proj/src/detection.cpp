// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "scenefuse/detection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "scenefuse/error.hpp"
#include "scenefuse/hsf.hpp"
#include "scenefuse/ops.hpp"

namespace scenefuse {

void Box3D::validate() const {
  if (!(size.x() > 0.0 && size.y() > 0.0 && size.z() > 0.0)) throw ConfigError("box: sizes must be positive");
  if (!(yaw >= -std::numbers::pi && yaw < std::numbers::pi)) throw ConfigError("box: yaw outside [-pi, pi)");
  if (!center.allFinite()) throw ConfigError("box: non-finite center");
}

double wrap_angle(double a) {
  const double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a + std::numbers::pi, two_pi);
  if (w < 0.0) w += two_pi;
  w -= std::numbers::pi;
  if (w >= std::numbers::pi) w -= two_pi;
  if (w < -std::numbers::pi) w = -std::numbers::pi;
  return w;
}

BoxCode encode_box(const Box3D& box, GridIndex cell, const BevGridSpec& grid) {
  const Eigen::Vector2d c = grid.cell_center(cell.row, cell.col);
  return {(box.center.x() - c.x()) / grid.cell,
          (box.center.y() - c.y()) / grid.cell,
          box.center.z(),
          std::log(box.size.x()),
          std::log(box.size.y()),
          std::log(box.size.z()),
          std::sin(box.yaw),
          std::cos(box.yaw)};
}

Box3D decode_box(const BoxCode& code, GridIndex cell, const BevGridSpec& grid, int class_id, double score) {
  const Eigen::Vector2d c = grid.cell_center(cell.row, cell.col);
  Box3D b;
  b.center = {c.x() + code[0] * grid.cell, c.y() + code[1] * grid.cell, code[2]};
  b.size = {std::exp(code[3]), std::exp(code[4]), std::exp(code[5])};
  b.yaw = (code[6] == 0.0 && code[7] == 0.0) ? 0.0 : wrap_angle(std::atan2(code[6], code[7]));
  b.class_id = class_id;
  b.score = score;
  return b;
}

std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
  const int rows = static_cast<int>(cost.rows()), cols = static_cast<int>(cost.cols());
  if (cols > rows) throw ConfigError("assignment: more columns than rows");
  if (!cost.allFinite()) throw ConfigError("assignment: non-finite cost");
  // Shortest augmenting paths with potentials; columns of `cost` are the
  // items to place (n), rows the slots (m).
  const int n = cols, m = rows;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(m) + 1, 0), way(static_cast<std::size_t>(m) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(j - 1, i0 - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_of(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j)
    if (p[static_cast<std::size_t>(j)] != 0) row_of[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return row_of;
}

MatchResult hungarian_match(const Eigen::MatrixXd& cost) {
  if (cost.cols() > cost.rows()) {
    throw ConfigError("hungarian_match: " + std::to_string(cost.cols()) + " ground truths but only " +
                      std::to_string(cost.rows()) + " predictions");
  }
  MatchResult r;
  std::vector<char> taken(static_cast<std::size_t>(cost.rows()), 0);
  if (cost.cols() > 0) {
    const std::vector<int> pred_of = solve_assignment(cost);
    for (std::size_t g = 0; g < pred_of.size(); ++g) {
      r.pairs.emplace_back(pred_of[g], static_cast<int>(g));
      taken[static_cast<std::size_t>(pred_of[g])] = 1;
    }
  }
  for (int i = 0; i < static_cast<int>(cost.rows()); ++i)
    if (!taken[static_cast<std::size_t>(i)]) r.unmatched.push_back(i);
  return r;
}

double gaussian_radius(double length_cells, double width_cells, double min_overlap) {
  const double h = length_cells, w = width_cells, o = min_overlap;
  const double s = h + w, hw = h * w;
  // Both corners moved inward: IoU = (h - 2r)(w - 2r) / hw.
  const double r_in = (s - std::sqrt(s * s - 4.0 * hw * (1.0 - o))) / 4.0;
  // Both corners moved outward: IoU = hw / ((h + 2r)(w + 2r)).
  const double r_out = (-s + std::sqrt(s * s - 4.0 * hw * (1.0 - 1.0 / o))) / 4.0;
  // Same size, shifted by r along both axes.
  const double r_shift = (s - std::sqrt(s * s - 4.0 * hw * (1.0 - o) / (1.0 + o))) / 2.0;
  return std::min({r_in, r_out, r_shift});
}

Tensor gaussian_targets(const std::vector<Box3D>& gt, const BevGridSpec& grid, int num_classes, double min_overlap) {
  Tensor t({grid.num_cells(), num_classes});
  for (const Box3D& b : gt) {
    if (b.class_id < 0 || b.class_id >= num_classes) throw ConfigError("gaussian_targets: class id out of range");
    const auto center = grid.locate(b.center.x(), b.center.y());
    if (!center) continue;
    const double radius = gaussian_radius(b.size.x() / grid.cell, b.size.y() / grid.cell, min_overlap);
    const int r = std::max(1, static_cast<int>(std::floor(radius)));
    const double sigma = (2.0 * r + 1.0) / 6.0;
    for (int dr = -r; dr <= r; ++dr) {
      for (int dc = -r; dc <= r; ++dc) {
        const int row = center->row + dr, col = center->col + dc;
        if (row < 0 || row >= grid.rows || col < 0 || col >= grid.cols) continue;
        const double v = std::exp(-static_cast<double>(dr * dr + dc * dc) / (2.0 * sigma * sigma));
        double& cell = t.at(row * grid.cols + col, b.class_id);
        cell = std::max(cell, v);
      }
    }
  }
  return t;
}

namespace ad {
namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// -weight * (1 - p)^gamma * log p and its derivative in the logit.
void positive_term(double x, double gamma, double weight, double& loss, double& grad) {
  const double p = sigmoid(x), q = sigmoid(-x);
  const double qg = std::pow(q, gamma);
  const double log_p = -softplus(-x);
  loss = -weight * qg * log_p;
  grad = weight * qg * (gamma * p * log_p - q);
}

// -weight * p^gamma * log(1 - p) and its derivative in the logit.
void negative_term(double x, double gamma, double weight, double& loss, double& grad) {
  const double p = sigmoid(x), q = sigmoid(-x);
  const double pg = std::pow(p, gamma);
  const double log_q = -softplus(x);
  loss = -weight * pg * log_q;
  grad = weight * pg * (p - gamma * q * log_q);
}

Var reduce_record(Var x, double total, Tensor grad) {
  auto g = std::make_shared<Tensor>(std::move(grad));
  return x.tape->record(Tensor::scalar(total), {x}, [x, g](Tape& tp, const Tensor& out) {
    if (!tp.needs_grad(x)) return;
    Tensor& buf = tp.grad_buffer(x.id);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += out[0] * (*g)[i];
  });
}

}  // namespace

Var sigmoid_focal_loss(Var logits, const Tensor& targets, double gamma, double alpha) {
  const Tensor& x = logits.value();
  if (x.shape() != targets.shape()) throw ConfigError("focal loss: target shape mismatch");
  Tensor grad(x.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double l = 0.0, g = 0.0;
    if (targets[i] > 0.5) {
      positive_term(x[i], gamma, alpha < 0.0 ? 1.0 : alpha, l, g);
    } else {
      negative_term(x[i], gamma, alpha < 0.0 ? 1.0 : 1.0 - alpha, l, g);
    }
    total += l;
    grad[i] = g;
  }
  return reduce_record(logits, total, std::move(grad));
}

Var penalty_reduced_focal_loss(Var logits, const Tensor& targets, double alpha, double beta) {
  const Tensor& x = logits.value();
  if (x.shape() != targets.shape()) throw ConfigError("heatmap loss: target shape mismatch");
  Tensor grad(x.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double l = 0.0, g = 0.0;
    if (targets[i] == 1.0) {
      positive_term(x[i], alpha, 1.0, l, g);
    } else {
      negative_term(x[i], alpha, std::pow(1.0 - targets[i], beta), l, g);
    }
    total += l;
    grad[i] = g;
  }
  return reduce_record(logits, total, std::move(grad));
}

Var masked_l1(Var pred, const Tensor& target, const std::vector<std::uint8_t>& row_mask) {
  const Tensor& x = pred.value();
  if (x.shape() != target.shape() || x.rank() != 2 || static_cast<int>(row_mask.size()) != x.dim(0)) {
    throw ConfigError("l1 loss: shape mismatch");
  }
  const int n = x.dim(0), m = x.dim(1);
  Tensor grad(x.shape());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!row_mask[static_cast<std::size_t>(i)]) continue;
    for (int j = 0; j < m; ++j) {
      const double d = x.at(i, j) - target.at(i, j);
      total += std::abs(d);
      grad.at(i, j) = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    }
  }
  return reduce_record(pred, total, std::move(grad));
}

}  // namespace ad

std::vector<Candidate> select_queries(const Tensor& heatmap_logits, int rows, int cols, int n) {
  const int cells = rows * cols, classes = heatmap_logits.dim(1);
  if (heatmap_logits.rank() != 2 || heatmap_logits.dim(0) != cells) throw ConfigError("select_queries: bad heatmap");
  if (n < 1 || n > cells * classes) {
    throw ConfigError("select_queries: num_queries must be in [1, " + std::to_string(cells * classes) + "]");
  }
  auto score = [&](int cell, int c) { return 1.0 / (1.0 + std::exp(-heatmap_logits.at(cell, c))); };
  struct Entry {
    double s;
    int key;
  };
  std::vector<Entry> peaks, rest;
  for (int c = 0; c < classes; ++c) {
    for (int r = 0; r < rows; ++r) {
      for (int col = 0; col < cols; ++col) {
        const double s = score(r * cols + col, c);
        bool peak = true;
        for (int dr = -1; dr <= 1 && peak; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr, cc = col + dc;
            if ((dr == 0 && dc == 0) || rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
            if (score(rr * cols + cc, c) > s) {
              peak = false;
              break;
            }
          }
        (peak ? peaks : rest).push_back({s, c * cells + r * cols + col});
      }
    }
  }
  auto by_score = [](const Entry& a, const Entry& b) { return a.s != b.s ? a.s > b.s : a.key < b.key; };
  std::sort(peaks.begin(), peaks.end(), by_score);
  std::sort(rest.begin(), rest.end(), by_score);
  peaks.insert(peaks.end(), rest.begin(), rest.end());
  std::vector<Candidate> out;
  for (int i = 0; i < n; ++i) {
    const Entry& e = peaks[static_cast<std::size_t>(i)];
    const int cell = e.key % cells;
    out.push_back({e.key / cells, cell / cols, cell % cols, e.s});
  }
  return out;
}

Decoder::Decoder(std::string name, DecoderConfig cfg)
    : name_(std::move(name)), cfg_(cfg), head_(name_ + ".heatmap", cfg.channels, cfg.num_classes) {
  cfg_.attention().validate();
  if (cfg_.num_queries < 1) throw ConfigError("decoder: num_queries must be >= 1");
}

void Decoder::init(ParamStore& store, std::mt19937_64& rng) const {
  const int c = cfg_.channels;
  head_.init(store, rng);
  store.add(name_ + ".class_embed", init::normal({cfg_.num_classes, c}, 0.1, rng));
  if (cfg_.self_attention) {
    MultiHeadAttention(name_ + ".self.attn", cfg_.attention()).init(store, rng);
    LayerNorm{name_ + ".self.norm1", c}.init(store);
  }
  MultiHeadAttention(name_ + ".cross.attn", cfg_.attention()).init(store, rng);
  init_prenorm_block(store, rng, name_ + ".cross", c);
  LayerNorm{name_ + ".memory_norm", c}.init(store);
  store.add(name_ + ".cls.weight", init::fan_in_uniform({c, cfg_.num_classes}, c, rng));
  store.add(name_ + ".cls.bias", Tensor({cfg_.num_classes}, -2.19));
  Linear{name_ + ".reg1", c, c}.init(store, rng);
  Linear{name_ + ".reg2", c, 8}.init(store, rng);
}

Decoder::Output Decoder::forward(ad::Tape& tape, const ParamStore& store, ad::Var b_hat, int rows, int cols,
                                 const std::vector<Candidate>* fixed) const {
  const int c = cfg_.channels;
  Output out;
  out.heatmap = head_.forward(tape, store, b_hat, rows, cols);
  out.queries = fixed ? *fixed : select_queries(out.heatmap.logits.value(), rows, cols, cfg_.num_queries);
  std::vector<int> cells, classes;
  std::vector<Eigen::Vector2d> pos;
  for (const Candidate& q : out.queries) {
    cells.push_back(q.row * cols + q.col);
    classes.push_back(q.class_id);
    pos.emplace_back(q.row, q.col);
  }
  const Tensor query_pos = sinusoidal_encoding(pos, c);
  ad::Var x = ad::add(ad::gather_rows(b_hat, cells), ad::gather_rows(tape.param(store, name_ + ".class_embed"), classes));
  x = ad::add_constant(x, query_pos);
  if (cfg_.self_attention) {
    const MultiHeadAttention attn(name_ + ".self.attn", cfg_.attention());
    x = ad::add(x, msa(tape, store, attn, LayerNorm{name_ + ".self.norm1", c}(tape, store, x)));
  }
  ad::Var memory = LayerNorm{name_ + ".memory_norm", c}(tape, store, b_hat);
  ad::Var keys = ad::add_constant(memory, grid_encoding(rows, cols, c));
  ad::Var q = ad::add_constant(block_norm1(name_ + ".cross", c)(tape, store, x), query_pos);
  const MultiHeadAttention cross(name_ + ".cross.attn", cfg_.attention());
  x = ad::add(x, mca(tape, store, cross, q, keys, memory));
  x = prenorm_ffn(tape, store, name_ + ".cross", x, c);
  out.cls_logits = Linear{name_ + ".cls", c, cfg_.num_classes}(tape, store, x);
  out.regression = Linear{name_ + ".reg2", c, 8}(tape, store, ad::relu(Linear{name_ + ".reg1", c, c}(tape, store, x)));
  return out;
}

DetectionSet make_detections(const Decoder::Output& out, const BevGridSpec& grid) {
  DetectionSet d;
  const Tensor& logits = out.cls_logits.value();
  const Tensor& reg = out.regression.value();
  for (std::size_t i = 0; i < out.queries.size(); ++i) {
    const int row = static_cast<int>(i);
    int best = 0;
    for (int c = 1; c < logits.dim(1); ++c)
      if (logits.at(row, c) > logits.at(row, best)) best = c;
    BoxCode code;
    for (int k = 0; k < 8; ++k) code[static_cast<std::size_t>(k)] = reg.at(row, k);
    const GridIndex cell{out.queries[i].row, out.queries[i].col};
    const double score = 1.0 / (1.0 + std::exp(-logits.at(row, best)));
    d.boxes.push_back(decode_box(code, cell, grid, best, score));
    d.regression.push_back(code);
    d.query_cells.push_back(cell);
  }
  return d;
}

Eigen::MatrixXd matching_cost(const Decoder::Output& out, const std::vector<Box3D>& gt, const BevGridSpec& grid,
                              const LossConfig& cfg) {
  const Tensor& logits = out.cls_logits.value();
  const Tensor& reg = out.regression.value();
  const int n = static_cast<int>(out.queries.size());
  Eigen::MatrixXd cost(n, static_cast<int>(gt.size()));
  for (int i = 0; i < n; ++i) {
    const GridIndex cell{out.queries[static_cast<std::size_t>(i)].row, out.queries[static_cast<std::size_t>(i)].col};
    for (std::size_t j = 0; j < gt.size(); ++j) {
      const double p = 1.0 / (1.0 + std::exp(-logits.at(i, gt[j].class_id)));
      const BoxCode target = encode_box(gt[j], cell, grid);
      double l1 = 0.0;
      for (int k = 0; k < 8; ++k) l1 += std::abs(reg.at(i, k) - target[static_cast<std::size_t>(k)]);
      cost(i, static_cast<int>(j)) = cfg.cost_cls * (1.0 - p) + cfg.cost_reg * l1;
    }
  }
  return cost;
}

LossOutput detection_loss(const Decoder::Output& out, const std::vector<const Heatmap*>& heatmaps,
                          const std::vector<Box3D>& gt, const BevGridSpec& grid, const LossConfig& cfg,
                          const MatchResult* fixed_match) {
  LossOutput res;
  res.match = fixed_match ? *fixed_match : hungarian_match(matching_cost(out, gt, grid, cfg));
  const int n = static_cast<int>(out.queries.size());
  const int classes = out.cls_logits.dim(1);
  Tensor cls_target({n, classes});
  Tensor reg_target({n, 8});
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n), 0);
  for (const auto& [pred, g] : res.match.pairs) {
    const Box3D& box = gt[static_cast<std::size_t>(g)];
    cls_target.at(pred, box.class_id) = 1.0;
    const BoxCode code =
        encode_box(box, {out.queries[static_cast<std::size_t>(pred)].row, out.queries[static_cast<std::size_t>(pred)].col},
                   grid);
    for (int k = 0; k < 8; ++k) reg_target.at(pred, k) = code[static_cast<std::size_t>(k)];
    mask[static_cast<std::size_t>(pred)] = 1;
  }
  const double norm = std::max<double>(1.0, static_cast<double>(gt.size()));
  ad::Var cls = ad::scale(ad::sigmoid_focal_loss(out.cls_logits, cls_target, cfg.focal_gamma, cfg.focal_alpha),
                          cfg.w_cls / norm);
  ad::Var reg = ad::scale(ad::masked_l1(out.regression, reg_target, mask), cfg.w_reg / norm);
  res.cls = cls.value()[0];
  res.reg = reg.value()[0];
  ad::Var total = ad::add(cls, reg);
  if (!heatmaps.empty()) {
    const Tensor target = gaussian_targets(gt, grid, classes, cfg.min_overlap);
    double pos = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) pos += target[i] == 1.0 ? 1.0 : 0.0;
    for (const Heatmap* h : heatmaps) {
      ad::Var hm = ad::scale(ad::penalty_reduced_focal_loss(h->logits, target), cfg.w_heatmap / std::max(1.0, pos));
      res.heatmap += hm.value()[0];
      total = ad::add(total, hm);
    }
  }
  res.total = total;
  return res;
}

}  // namespace scenefuse
