// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "scenefuse/igf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scenefuse/error.hpp"
#include "scenefuse/hsf.hpp"
#include "scenefuse/ops.hpp"

namespace scenefuse {

void IgfConfig::validate() const {
  attention().validate();
  if (num_instances < 1) throw ConfigError("igf: num_instances must be >= 1");
  if (points < 1) throw ConfigError("igf: points must be >= 1");
  if (num_classes < 1) throw ConfigError("igf: num_classes must be >= 1");
}

std::vector<Candidate> top_k_candidates(const Tensor& logits, int cols, int k) {
  if (logits.rank() != 2 || cols < 1 || logits.dim(0) % cols != 0) throw ConfigError("top-k: bad heatmap shape");
  const int cells = logits.dim(0), classes = logits.dim(1);
  const long total = static_cast<long>(cells) * classes;
  if (k < 0 || k > total) {
    throw ConfigError("top-k: K = " + std::to_string(k) + " exceeds " + std::to_string(total) + " candidates");
  }
  // Key order (class, cell) matches (class, row, col) lexicographic order.
  std::vector<double> score(static_cast<std::size_t>(total));
  for (int cell = 0; cell < cells; ++cell)
    for (int c = 0; c < classes; ++c)
      score[static_cast<std::size_t>(c) * cells + cell] = 1.0 / (1.0 + std::exp(-logits.at(cell, c)));
  std::vector<long> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0L);
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](long a, long b) {
    const double sa = score[static_cast<std::size_t>(a)], sb = score[static_cast<std::size_t>(b)];
    return sa != sb ? sa > sb : a < b;
  });
  std::vector<Candidate> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const long key = order[static_cast<std::size_t>(i)];
    const int c = static_cast<int>(key / cells), cell = static_cast<int>(key % cells);
    out.push_back({c, cell / cols, cell % cols, score[static_cast<std::size_t>(key)]});
  }
  return out;
}

Tensor grid_encoding(int rows, int cols, int channels) {
  std::vector<Eigen::Vector2d> rc;
  rc.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) rc.emplace_back(r, c);
  return sinusoidal_encoding(rc, channels);
}

HeatmapHead::HeatmapHead(std::string name, int channels, int num_classes)
    : name_(std::move(name)),
      channels_(channels),
      num_classes_(num_classes),
      conv1_{name_ + ".conv1", channels, channels},
      conv2_{name_ + ".conv2", channels, num_classes} {}

void HeatmapHead::init(ParamStore& store, std::mt19937_64& rng) const {
  conv1_.init(store, rng);
  store.add(conv2_.name + ".weight", init::fan_in_uniform({3, 3, channels_, num_classes_}, 9 * channels_, rng));
  store.add(conv2_.name + ".bias", Tensor({num_classes_}, -2.19));
}

Heatmap HeatmapHead::forward(ad::Tape& tape, const ParamStore& store, ad::Var map, int rows, int cols) const {
  ad::Var x = ad::reshape(map, {rows, cols, channels_});
  x = ad::relu(conv1_(tape, store, x));
  x = conv2_(tape, store, x);
  return {ad::reshape(x, {rows * cols, num_classes_}), rows, cols, num_classes_};
}

InstanceGuidedFusion::InstanceGuidedFusion(std::string name, IgfConfig cfg)
    : name_(std::move(name)), cfg_(cfg), head_(name_ + ".heatmap", cfg.channels, cfg.num_classes) {
  cfg_.validate();
}

void InstanceGuidedFusion::init(ParamStore& store, std::mt19937_64& rng) const {
  head_.init(store, rng);
  embed().init(store, rng);
  instance_attention().init(store, rng);
  init_prenorm_block(store, rng, name_ + ".instance", cfg_.channels);
  align().init(store, rng);
  deformable().init(store, rng);
  scene_attention().init(store, rng);
  LayerNorm{name_ + ".i2s.norm_q", cfg_.channels}.init(store);
  LayerNorm{name_ + ".i2s.norm_kv", cfg_.channels}.init(store);
}

Heatmap InstanceGuidedFusion::heatmap(ad::Tape& tape, const ParamStore& store, ad::Var b_prime, int rows,
                                      int cols) const {
  return head_.forward(tape, store, b_prime, rows, cols);
}

InstanceSet InstanceGuidedFusion::select_instances(ad::Tape& tape, const ParamStore& store, ad::Var b_prime,
                                                   const Heatmap& heatmap, const std::vector<Candidate>* fixed) const {
  const std::vector<Candidate> picked =
      fixed ? *fixed : top_k_candidates(heatmap.logits.value(), heatmap.cols, cfg_.num_instances);
  InstanceSet set;
  std::vector<int> cells;
  for (const Candidate& c : picked) {
    if (c.row < 0 || c.row >= heatmap.rows || c.col < 0 || c.col >= heatmap.cols) {
      throw ConfigError("select_instances: candidate outside the grid");
    }
    cells.push_back(c.row * heatmap.cols + c.col);
    set.positions.emplace_back(c.row, c.col);
    set.scores.push_back(c.score);
    set.class_ids.push_back(c.class_id);
  }
  ad::Var q = embed()(tape, store, ad::gather_rows(b_prime, std::move(cells)));
  if (cfg_.instance_posenc && !set.positions.empty()) {
    q = ad::add_constant(q, sinusoidal_encoding(set.positions, cfg_.channels));
  }
  set.features = q;
  return set;
}

InstanceSet InstanceGuidedFusion::instance_self_attention(ad::Tape& tape, const ParamStore& store,
                                                          const InstanceSet& q, AttentionProbe* probe) const {
  if (q.size() < 1) throw EmptyAttentionError("instance attention: no instances");
  const std::string prefix = name_ + ".instance";
  InstanceSet out = q;
  ad::Var h = block_norm1(prefix, cfg_.channels)(tape, store, q.features);
  ad::Var x = ad::add(q.features, msa(tape, store, instance_attention(), h, std::nullopt, probe));
  out.features = prenorm_ffn(tape, store, prefix, x, cfg_.channels);
  return out;
}

InstanceSet InstanceGuidedFusion::aggregate_context(ad::Tape& tape, const ParamStore& store, const InstanceSet& q,
                                                    ad::Var b_prime, int rows, int cols) const {
  ad::Var aligned = align()(tape, store, ad::reshape(b_prime, {rows, cols, cfg_.channels}));
  std::vector<Eigen::Vector2d> ref;
  ref.reserve(q.positions.size());
  for (const Eigen::Vector2d& rc : q.positions) ref.emplace_back(rc.y(), rc.x());
  InstanceSet out = q;
  out.features = ad::add(q.features, deformable().forward(tape, store, q.features, ref, aligned));
  return out;
}

ad::Var InstanceGuidedFusion::instance_to_scene(ad::Tape& tape, const ParamStore& store, ad::Var b_prime,
                                                const InstanceSet& q, int rows, int cols,
                                                AttentionProbe* probe) const {
  if (q.size() < 1) throw EmptyAttentionError("instance_to_scene: no instances to attend to");
  if (cfg_.zero_i2s) return b_prime;
  ad::Var grid = LayerNorm{name_ + ".i2s.norm_q", cfg_.channels}(tape, store, b_prime);
  if (cfg_.grid_posenc) grid = ad::add_constant(grid, grid_encoding(rows, cols, cfg_.channels));
  ad::Var values = LayerNorm{name_ + ".i2s.norm_kv", cfg_.channels}(tape, store, q.features);
  ad::Var keys = values;
  if (cfg_.grid_posenc) keys = ad::add_constant(values, sinusoidal_encoding(q.positions, cfg_.channels));
  return ad::add(b_prime, mca(tape, store, scene_attention(), grid, keys, values, probe));
}

InstanceGuidedFusion::Output InstanceGuidedFusion::forward(ad::Tape& tape, const ParamStore& store, ad::Var b_prime,
                                                           int rows, int cols, const std::vector<Candidate>* fixed,
                                                           AttentionProbe* i2s_probe) const {
  Output out;
  out.heatmap = heatmap(tape, store, b_prime, rows, cols);
  out.selected = select_instances(tape, store, b_prime, out.heatmap, fixed);
  InstanceSet related = instance_self_attention(tape, store, out.selected);
  out.aggregated = aggregate_context(tape, store, related, b_prime, rows, cols);
  out.scene = instance_to_scene(tape, store, b_prime, out.aggregated, rows, cols, i2s_probe);
  return out;
}

}  // namespace scenefuse
