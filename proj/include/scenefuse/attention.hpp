// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "scenefuse/autodiff.hpp"
#include "scenefuse/layers.hpp"
#include "scenefuse/params.hpp"

namespace scenefuse {

struct AttentionConfig {
  int channels = 32;
  int heads = 4;

  int head_dim() const { return channels / heads; }
  /// Throws ConfigError unless channels is a positive multiple of heads.
  void validate() const;
};

/// Token grouping for the attention kernel: group g lets queries
/// [query_offsets[g], query_offsets[g+1]) attend to keys
/// [key_offsets[g], key_offsets[g+1]).
struct AttentionLayout {
  std::vector<int> query_offsets;
  std::vector<int> key_offsets;
  /// Per-group Sq x Sk allowed flags, concatenated; empty means dense.
  std::vector<std::uint8_t> allowed;
  /// Sq x Sk row indices into a {entries, heads} bias table, shared by all
  /// groups (which must then have equal sizes); empty means no bias.
  std::vector<int> bias_index;

  static AttentionLayout single(int queries, int keys);
  static AttentionLayout uniform(int groups, int queries, int keys);
  static AttentionLayout ragged(std::vector<int> offsets);

  int num_groups() const { return static_cast<int>(query_offsets.size()) - 1; }
  int group_queries(int g) const { return query_offsets[g + 1] - query_offsets[g]; }
  int group_keys(int g) const { return key_offsets[g + 1] - key_offsets[g]; }
};

/// Debug hook: softmax weights of every attention call it is passed to.
struct AttentionProbe {
  struct Record {
    std::shared_ptr<const AttentionLayout> layout;
    int heads = 0;
    /// Group-major, then head, query, key. Disallowed entries are exactly 0.
    std::vector<double> weights;
    std::vector<std::size_t> group_offsets;

    double weight(int group, int head, int query, int key) const;
  };
  std::vector<Record> records;
};

/// Scaled dot-product attention per head and per group, with optional
/// masking and a learned additive bias. Queries whose key set is empty
/// produce zero rows.
ad::Var attention_core(ad::Var q, ad::Var k, ad::Var v, int heads, std::shared_ptr<const AttentionLayout> layout,
                       ad::Var bias_table = {}, AttentionProbe* probe = nullptr);

/// Multi-head attention with Q/K/V/output projections.
class MultiHeadAttention {
 public:
  MultiHeadAttention(std::string name, AttentionConfig cfg);

  void init(ParamStore& store, std::mt19937_64& rng) const;

  /// Projects queries, keys and values, attends, projects the result.
  ad::Var forward(ad::Tape& tape, const ParamStore& store, ad::Var query_src, ad::Var key_src, ad::Var value_src,
                  std::shared_ptr<const AttentionLayout> layout, ad::Var bias_table = {},
                  AttentionProbe* probe = nullptr) const;

  const std::string& name() const { return name_; }
  const AttentionConfig& config() const { return cfg_; }
  Linear q_proj() const { return {name_ + ".q", cfg_.channels, cfg_.channels}; }
  Linear k_proj() const { return {name_ + ".k", cfg_.channels, cfg_.channels}; }
  Linear v_proj() const { return {name_ + ".v", cfg_.channels, cfg_.channels}; }
  Linear out_proj() const { return {name_ + ".out", cfg_.channels, cfg_.channels}; }

 private:
  std::string name_;
  AttentionConfig cfg_;
};

/// Self-attention over X {S, C}. With a mask, invalid rows are excluded as
/// keys and come back as zeros. Throws EmptyAttentionError when every entry
/// is masked.
ad::Var msa(ad::Tape& tape, const ParamStore& store, const MultiHeadAttention& attn, ad::Var x,
            std::optional<std::span<const std::uint8_t>> mask = std::nullopt, AttentionProbe* probe = nullptr);

/// Independent self-attention inside each row segment of X.
ad::Var msa_segments(ad::Tape& tape, const ParamStore& store, const MultiHeadAttention& attn, ad::Var x,
                     std::vector<int> offsets, AttentionProbe* probe = nullptr);

/// Cross-attention: every query row attends over all key/value rows.
/// Throws EmptyAttentionError when there are no keys.
ad::Var mca(ad::Tape& tape, const ParamStore& store, const MultiHeadAttention& attn, ad::Var queries, ad::Var kv,
            AttentionProbe* probe = nullptr);
/// As mca, with keys and values taken from different sources (keys usually
/// carry positional encodings that values must not).
ad::Var mca(ad::Tape& tape, const ParamStore& store, const MultiHeadAttention& attn, ad::Var queries, ad::Var keys,
            ad::Var values, AttentionProbe* probe = nullptr);

struct WindowSpec {
  int size = 6;
  int shift_row = 0;
  int shift_col = 0;

  static WindowSpec shifted(int size) { return {size, size / 2, size / 2}; }
  bool is_shifted() const { return shift_row != 0 || shift_col != 0; }
};

/// Index bookkeeping for (shifted) window partitioning of a rows x cols map.
/// The map is zero-padded to multiples of the window size, cyclically
/// shifted by (shift_row, shift_col), and cut into size x size windows.
struct WindowPartition {
  int rows = 0;
  int cols = 0;
  WindowSpec spec;
  int padded_rows = 0;
  int padded_cols = 0;
  int windows_per_row = 0;
  int num_windows = 0;
  /// Per token (window-major): source cell index, or -1 for padding.
  std::vector<int> token_source;
  /// Per cell: its token index.
  std::vector<int> cell_token;
  /// Per token: region label; tokens attend only within their label.
  std::vector<int> region;

  /// Throws ConfigError when the window exceeds the map or the shift is out
  /// of [0, size).
  static WindowPartition build(int rows, int cols, WindowSpec spec);

  int tokens_per_window() const { return spec.size * spec.size; }
  bool allowed(int token_a, int token_b) const;
  /// Attention layout with the boundary/padding mask and relative-position
  /// bias lookup.
  std::shared_ptr<const AttentionLayout> layout(bool relative_bias) const;
  int bias_entries() const { return (2 * spec.size - 1) * (2 * spec.size - 1); }

  ad::Var partition(ad::Var map) const;
  ad::Var reverse(ad::Var tokens) const;
};

/// Window self-attention of a {rows * cols, C} map. `bias_table` names a
/// {(2M-1)^2, heads} parameter, or is empty for none. With `identity` set
/// the attention is skipped and the map is partitioned and reversed only.
ad::Var window_attention(ad::Tape& tape, const ParamStore& store, const MultiHeadAttention& attn,
                         const std::string& bias_table, ad::Var map, int rows, int cols, WindowSpec spec,
                         AttentionProbe* probe = nullptr, bool identity = false);

struct DeformableSpec {
  int points = 16;
};

/// Deformable attention: each query predicts `points` offsets and weights
/// per head around its reference point and blends bilinear samples of the
/// value map.
class DeformableAttention {
 public:
  DeformableAttention(std::string name, AttentionConfig cfg, DeformableSpec spec);

  /// Offset head zero, weight head uniform: starts as a reference-point sampler.
  void init(ParamStore& store, std::mt19937_64& rng) const;

  /// queries {K, C}; ref_uv holds (u = col, v = row) in map cells;
  /// value_map {H, W, C}. Returns {K, C}.
  ad::Var forward(ad::Tape& tape, const ParamStore& store, ad::Var queries, const std::vector<Eigen::Vector2d>& ref_uv,
                  ad::Var value_map) const;

  const AttentionConfig& config() const { return cfg_; }
  const DeformableSpec& spec() const { return spec_; }
  Linear offset_head() const { return {name_ + ".offsets", cfg_.channels, cfg_.heads * spec_.points * 2}; }
  Linear weight_head() const { return {name_ + ".weights", cfg_.channels, cfg_.heads * spec_.points}; }
  Linear value_proj() const { return {name_ + ".value", cfg_.channels, cfg_.channels}; }
  Linear out_proj() const { return {name_ + ".out", cfg_.channels, cfg_.channels}; }

 private:
  std::string name_;
  AttentionConfig cfg_;
  DeformableSpec spec_;
};

/// Sinusoidal encoding of (row, col) into `channels` values: first half
/// encodes the row, second half the column.
Tensor sinusoidal_encoding(std::span<const Eigen::Vector2d> row_col, int channels);

}  // namespace scenefuse
