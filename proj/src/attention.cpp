// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "scenefuse/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scenefuse/error.hpp"
#include "scenefuse/ops.hpp"

namespace scenefuse {

void AttentionConfig::validate() const {
  if (channels <= 0 || heads <= 0 || channels % heads != 0) {
    throw ConfigError("attention: channels (" + std::to_string(channels) + ") must be a positive multiple of heads (" +
                      std::to_string(heads) + ")");
  }
}

AttentionLayout AttentionLayout::single(int queries, int keys) { return uniform(1, queries, keys); }

AttentionLayout AttentionLayout::uniform(int groups, int queries, int keys) {
  AttentionLayout l;
  for (int g = 0; g <= groups; ++g) {
    l.query_offsets.push_back(g * queries);
    l.key_offsets.push_back(g * keys);
  }
  return l;
}

AttentionLayout AttentionLayout::ragged(std::vector<int> offsets) {
  AttentionLayout l;
  l.query_offsets = offsets;
  l.key_offsets = std::move(offsets);
  return l;
}

double AttentionProbe::Record::weight(int group, int head, int query, int key) const {
  const int sq = layout->group_queries(group), sk = layout->group_keys(group);
  return weights[group_offsets[static_cast<std::size_t>(group)] +
                 (static_cast<std::size_t>(head) * sq + static_cast<std::size_t>(query)) * sk +
                 static_cast<std::size_t>(key)];
}

namespace {

struct CoreGeometry {
  int groups = 0;
  std::vector<std::size_t> weight_offsets;   // per group, into the weights buffer
  std::vector<std::size_t> allowed_offsets;  // per group, into layout.allowed
};

CoreGeometry check_layout(const AttentionLayout& l, int nq, int nk, int heads, int bias_rows) {
  CoreGeometry geo;
  geo.groups = l.num_groups();
  if (geo.groups < 0 || l.key_offsets.size() != l.query_offsets.size()) {
    throw ConfigError("attention layout: offset arrays disagree");
  }
  if (l.query_offsets.front() != 0 || l.key_offsets.front() != 0 || l.query_offsets.back() != nq ||
      l.key_offsets.back() != nk) {
    throw ConfigError("attention layout does not cover the query/key rows");
  }
  std::size_t w = 0, a = 0;
  for (int g = 0; g < geo.groups; ++g) {
    const int sq = l.group_queries(g), sk = l.group_keys(g);
    if (sq < 0 || sk < 0) throw ConfigError("attention layout: decreasing offsets");
    geo.weight_offsets.push_back(w);
    geo.allowed_offsets.push_back(a);
    w += static_cast<std::size_t>(heads) * sq * sk;
    a += static_cast<std::size_t>(sq) * sk;
  }
  geo.weight_offsets.push_back(w);
  geo.allowed_offsets.push_back(a);
  if (!l.allowed.empty() && l.allowed.size() != a) throw ConfigError("attention layout: mask size mismatch");
  if (!l.bias_index.empty()) {
    for (int g = 0; g < geo.groups; ++g) {
      if (static_cast<std::size_t>(l.group_queries(g)) * l.group_keys(g) != l.bias_index.size()) {
        throw ConfigError("attention layout: relative bias needs uniform group sizes");
      }
    }
    for (int idx : l.bias_index)
      if (idx < 0 || idx >= bias_rows) throw ConfigError("attention layout: bias index out of range");
  }
  return geo;
}

}  // namespace

ad::Var attention_core(ad::Var q, ad::Var k, ad::Var v, int heads, std::shared_ptr<const AttentionLayout> layout,
                       ad::Var bias_table, AttentionProbe* probe) {
  ad::Tape& tape = *q.tape;
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  if (qv.rank() != 2 || kv.rank() != 2 || vv.rank() != 2) throw ConfigError("attention: inputs must be matrices");
  const int c = qv.dim(1);
  if (kv.dim(1) != c || vv.dim(1) != c || kv.dim(0) != vv.dim(0)) throw ConfigError("attention: q/k/v shape mismatch");
  if (heads <= 0 || c % heads != 0) throw ConfigError("attention: channels not divisible by heads");
  const bool has_bias = bias_table.valid();
  if (has_bias && (bias_table.value().rank() != 2 || bias_table.value().dim(1) != heads)) {
    throw ConfigError("attention: bias table must be {entries, heads}");
  }
  if (has_bias && layout->bias_index.empty()) throw ConfigError("attention: bias table without bias index");
  const int bias_rows = has_bias ? bias_table.value().dim(0) : 0;
  const CoreGeometry geo = check_layout(*layout, qv.dim(0), kv.dim(0), heads, bias_rows);
  const int dh = c / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const AttentionLayout& l = *layout;

  auto weights = std::make_shared<std::vector<double>>(geo.weight_offsets.back(), 0.0);
  Tensor out({qv.dim(0), c});
  std::vector<double> scores;
  for (int g = 0; g < geo.groups; ++g) {
    const int q0 = l.query_offsets[g], k0 = l.key_offsets[g];
    const int sq = l.group_queries(g), sk = l.group_keys(g);
    const std::uint8_t* allowed = l.allowed.empty() ? nullptr : l.allowed.data() + geo.allowed_offsets[g];
    scores.resize(static_cast<std::size_t>(sk));
    for (int h = 0; h < heads; ++h) {
      const int co = h * dh;
      for (int i = 0; i < sq; ++i) {
        double* w = weights->data() + geo.weight_offsets[g] + (static_cast<std::size_t>(h) * sq + i) * sk;
        const double* qi = qv.data() + static_cast<std::size_t>(q0 + i) * c + co;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < sk; ++j) {
          if (allowed && !allowed[static_cast<std::size_t>(i) * sk + j]) continue;
          const double* kj = kv.data() + static_cast<std::size_t>(k0 + j) * c + co;
          double s = 0.0;
          for (int d = 0; d < dh; ++d) s += qi[d] * kj[d];
          s *= scale;
          if (has_bias) s += bias_table.value().at(l.bias_index[static_cast<std::size_t>(i) * sk + j], h);
          scores[static_cast<std::size_t>(j)] = s;
          mx = std::max(mx, s);
        }
        if (mx == -std::numeric_limits<double>::infinity()) continue;  // no keys: zero row
        double total = 0.0;
        for (int j = 0; j < sk; ++j) {
          if (allowed && !allowed[static_cast<std::size_t>(i) * sk + j]) continue;
          w[j] = std::exp(scores[static_cast<std::size_t>(j)] - mx);
          total += w[j];
        }
        double* oi = out.data() + static_cast<std::size_t>(q0 + i) * c + co;
        for (int j = 0; j < sk; ++j) {
          if (w[j] == 0.0) continue;
          w[j] /= total;
          const double* vj = vv.data() + static_cast<std::size_t>(k0 + j) * c + co;
          for (int d = 0; d < dh; ++d) oi[d] += w[j] * vj[d];
        }
      }
    }
  }

  if (probe) {
    AttentionProbe::Record rec;
    rec.layout = layout;
    rec.heads = heads;
    rec.weights = *weights;
    rec.group_offsets = geo.weight_offsets;
    probe->records.push_back(std::move(rec));
  }

  std::vector<ad::Var> parents{q, k, v};
  if (has_bias) parents.push_back(bias_table);
  return tape.record(std::move(out), parents, [=](ad::Tape& tp, const Tensor& grad) {
    const AttentionLayout& l = *layout;
    const Tensor& qv = tp.value(q);
    const Tensor& kv = tp.value(k);
    const Tensor& vv = tp.value(v);
    Tensor* dq = tp.needs_grad(q) ? &tp.grad_buffer(q.id) : nullptr;
    Tensor* dk = tp.needs_grad(k) ? &tp.grad_buffer(k.id) : nullptr;
    Tensor* dv = tp.needs_grad(v) ? &tp.grad_buffer(v.id) : nullptr;
    Tensor* db = has_bias && tp.needs_grad(bias_table) ? &tp.grad_buffer(bias_table.id) : nullptr;
    std::vector<double> ds;
    for (int g = 0; g < geo.groups; ++g) {
      const int q0 = l.query_offsets[g], k0 = l.key_offsets[g];
      const int sq = l.group_queries(g), sk = l.group_keys(g);
      ds.resize(static_cast<std::size_t>(sk));
      for (int h = 0; h < heads; ++h) {
        const int co = h * dh;
        for (int i = 0; i < sq; ++i) {
          const double* w = weights->data() + geo.weight_offsets[g] + (static_cast<std::size_t>(h) * sq + i) * sk;
          const double* gi = grad.data() + static_cast<std::size_t>(q0 + i) * c + co;
          double row_dot = 0.0;
          for (int j = 0; j < sk; ++j) {
            if (w[j] == 0.0) {
              ds[static_cast<std::size_t>(j)] = 0.0;
              continue;
            }
            const double* vj = vv.data() + static_cast<std::size_t>(k0 + j) * c + co;
            double da = 0.0;
            for (int d = 0; d < dh; ++d) da += gi[d] * vj[d];
            ds[static_cast<std::size_t>(j)] = da;
            row_dot += w[j] * da;
            if (dv) {
              double* dvj = dv->data() + static_cast<std::size_t>(k0 + j) * c + co;
              for (int d = 0; d < dh; ++d) dvj[d] += w[j] * gi[d];
            }
          }
          const double* qi = qv.data() + static_cast<std::size_t>(q0 + i) * c + co;
          double* dqi = dq ? dq->data() + static_cast<std::size_t>(q0 + i) * c + co : nullptr;
          for (int j = 0; j < sk; ++j) {
            if (w[j] == 0.0) continue;
            const double s = w[j] * (ds[static_cast<std::size_t>(j)] - row_dot);
            if (db) db->at(l.bias_index[static_cast<std::size_t>(i) * sk + j], h) += s;
            const double ss = s * scale;
            const double* kj = kv.data() + static_cast<std::size_t>(k0 + j) * c + co;
            if (dqi)
              for (int d = 0; d < dh; ++d) dqi[d] += ss * kj[d];
            if (dk) {
              double* dkj = dk->data() + static_cast<std::size_t>(k0 + j) * c + co;
              for (int d = 0; d < dh; ++d) dkj[d] += ss * qi[d];
            }
          }
        }
      }
    }
  });
}

MultiHeadAttention::MultiHeadAttention(std::string name, AttentionConfig cfg) : name_(std::move(name)), cfg_(cfg) {
  cfg_.validate();
}

void MultiHeadAttention::init(ParamStore& store, std::mt19937_64& rng) const {
  q_proj().init(store, rng);
  k_proj().init(store, rng);
  v_proj().init(store, rng);
  out_proj().init(store, rng);
}

ad::Var MultiHeadAttention::forward(ad::Tape& tape, const ParamStore& store, ad::Var query_src, ad::Var key_src,
                                    ad::Var value_src, std::shared_ptr<const AttentionLayout> layout,
                                    ad::Var bias_table, AttentionProbe* probe) const {
  ad::Var q = q_proj()(tape, store, query_src);
  ad::Var k = k_proj()(tape, store, key_src);
  ad::Var v = v_proj()(tape, store, value_src);
  ad::Var o = attention_core(q, k, v, cfg_.heads, std::move(layout), bias_table, probe);
  return out_proj()(tape, store, o);
}

ad::Var msa(ad::Tape& tape, const ParamStore& store, const MultiHeadAttention& attn, ad::Var x,
            std::optional<std::span<const std::uint8_t>> mask, AttentionProbe* probe) {
  const int s = x.value().dim(0);
  if (s < 1) throw EmptyAttentionError("msa: empty sequence");
  auto layout = std::make_shared<AttentionLayout>(AttentionLayout::single(s, s));
  if (!mask) return attn.forward(tape, store, x, x, x, layout, {}, probe);

  if (static_cast<int>(mask->size()) != s) throw ConfigError("msa: mask length mismatch");
  if (std::none_of(mask->begin(), mask->end(), [](std::uint8_t m) { return m != 0; })) {
    throw EmptyAttentionError("msa: every token is masked");
  }
  layout->allowed.resize(static_cast<std::size_t>(s) * s);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j)
      layout->allowed[static_cast<std::size_t>(i) * s + j] = ((*mask)[i] && (*mask)[j]) ? 1 : 0;
  ad::Var out = attn.forward(tape, store, x, x, x, layout, {}, probe);
  std::vector<double> keep(static_cast<std::size_t>(s));
  for (int i = 0; i < s; ++i) keep[static_cast<std::size_t>(i)] = (*mask)[i] ? 1.0 : 0.0;
  return ad::mul_rows(out, std::move(keep));
}

ad::Var msa_segments(ad::Tape& tape, const ParamStore& store, const MultiHeadAttention& attn, ad::Var x,
                     std::vector<int> offsets, AttentionProbe* probe) {
  auto layout = std::make_shared<AttentionLayout>(AttentionLayout::ragged(std::move(offsets)));
  return attn.forward(tape, store, x, x, x, layout, {}, probe);
}

ad::Var mca(ad::Tape& tape, const ParamStore& store, const MultiHeadAttention& attn, ad::Var queries, ad::Var kv,
            AttentionProbe* probe) {
  return mca(tape, store, attn, queries, kv, kv, probe);
}

ad::Var mca(ad::Tape& tape, const ParamStore& store, const MultiHeadAttention& attn, ad::Var queries, ad::Var keys,
            ad::Var values, AttentionProbe* probe) {
  const int t = keys.value().dim(0);
  if (t < 1) throw EmptyAttentionError("mca: no keys to attend to");
  auto layout = std::make_shared<AttentionLayout>(AttentionLayout::single(queries.value().dim(0), t));
  return attn.forward(tape, store, queries, keys, values, layout, {}, probe);
}

WindowPartition WindowPartition::build(int rows, int cols, WindowSpec spec) {
  const int m = spec.size;
  if (m < 1) throw ConfigError("window: size must be >= 1");
  if (m > std::min(rows, cols)) {
    throw ConfigError("window: size " + std::to_string(m) + " exceeds map " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  }
  if (spec.shift_row < 0 || spec.shift_row >= m || spec.shift_col < 0 || spec.shift_col >= m) {
    throw ConfigError("window: shift must lie in [0, size)");
  }
  WindowPartition p;
  p.rows = rows;
  p.cols = cols;
  p.spec = spec;
  p.padded_rows = (rows + m - 1) / m * m;
  p.padded_cols = (cols + m - 1) / m * m;
  p.windows_per_row = p.padded_cols / m;
  p.num_windows = (p.padded_rows / m) * p.windows_per_row;
  const std::size_t tokens = static_cast<std::size_t>(p.num_windows) * m * m;
  p.token_source.assign(tokens, -1);
  p.region.assign(tokens, 0);
  p.cell_token.assign(static_cast<std::size_t>(rows) * cols, -1);

  // Region label of a shifted coordinate along one axis; tokens that wrapped
  // around the border get a different label from their window neighbours.
  auto label = [m](int coord, int padded, int shift) {
    if (shift == 0) return 0;
    if (coord < padded - m) return 0;
    if (coord < padded - shift) return 1;
    return 2;
  };
  for (int w = 0; w < p.num_windows; ++w) {
    const int wr = w / p.windows_per_row, wc = w % p.windows_per_row;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        const int sr = wr * m + i, sc = wc * m + j;  // shifted coordinates
        const int r = (sr + spec.shift_row) % p.padded_rows;
        const int c = (sc + spec.shift_col) % p.padded_cols;
        const std::size_t tok = static_cast<std::size_t>(w) * m * m + static_cast<std::size_t>(i) * m + j;
        p.region[tok] = label(sr, p.padded_rows, spec.shift_row) * 3 + label(sc, p.padded_cols, spec.shift_col);
        if (r < rows && c < cols) {
          const int cell = r * cols + c;
          p.token_source[tok] = cell;
          p.cell_token[static_cast<std::size_t>(cell)] = static_cast<int>(tok);
        }
      }
    }
  }
  return p;
}

bool WindowPartition::allowed(int a, int b) const {
  const int t = tokens_per_window();
  if (a / t != b / t) return false;
  const auto ua = static_cast<std::size_t>(a), ub = static_cast<std::size_t>(b);
  return token_source[ua] >= 0 && token_source[ub] >= 0 && region[ua] == region[ub];
}

std::shared_ptr<const AttentionLayout> WindowPartition::layout(bool relative_bias) const {
  const int t = tokens_per_window();
  auto l = std::make_shared<AttentionLayout>(AttentionLayout::uniform(num_windows, t, t));
  l->allowed.resize(static_cast<std::size_t>(num_windows) * t * t);
  for (int w = 0; w < num_windows; ++w)
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < t; ++j)
        l->allowed[(static_cast<std::size_t>(w) * t + i) * t + j] = allowed(w * t + i, w * t + j) ? 1 : 0;
  if (relative_bias) {
    const int m = spec.size;
    l->bias_index.resize(static_cast<std::size_t>(t) * t);
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < t; ++j) {
        const int dr = i / m - j / m + m - 1;
        const int dc = i % m - j % m + m - 1;
        l->bias_index[static_cast<std::size_t>(i) * t + j] = dr * (2 * m - 1) + dc;
      }
  }
  return l;
}

ad::Var WindowPartition::partition(ad::Var map) const { return ad::gather_rows(map, token_source); }

ad::Var WindowPartition::reverse(ad::Var tokens) const { return ad::gather_rows(tokens, cell_token); }

ad::Var window_attention(ad::Tape& tape, const ParamStore& store, const MultiHeadAttention& attn,
                         const std::string& bias_table, ad::Var map, int rows, int cols, WindowSpec spec,
                         AttentionProbe* probe, bool identity) {
  if (map.value().rank() != 2 || map.value().dim(0) != rows * cols) {
    throw ConfigError("window_attention: map must be {rows * cols, C}");
  }
  const WindowPartition part = WindowPartition::build(rows, cols, spec);
  ad::Var tokens = part.partition(map);
  if (!identity) {
    const bool with_bias = !bias_table.empty();
    ad::Var bias = with_bias ? tape.param(store, bias_table) : ad::Var{};
    tokens = attn.forward(tape, store, tokens, tokens, tokens, part.layout(with_bias), bias, probe);
  }
  return part.reverse(tokens);
}

DeformableAttention::DeformableAttention(std::string name, AttentionConfig cfg, DeformableSpec spec)
    : name_(std::move(name)), cfg_(cfg), spec_(spec) {
  cfg_.validate();
  if (spec_.points < 1) throw ConfigError("deformable attention: points must be >= 1");
}

void DeformableAttention::init(ParamStore& store, std::mt19937_64& rng) const {
  const Linear off = offset_head(), wts = weight_head();
  store.add(off.name + ".weight", Tensor({off.in, off.out}));
  store.add(off.name + ".bias", Tensor({off.out}));
  store.add(wts.name + ".weight", Tensor({wts.in, wts.out}));
  store.add(wts.name + ".bias", Tensor({wts.out}));
  value_proj().init(store, rng);
  out_proj().init(store, rng);
}

ad::Var DeformableAttention::forward(ad::Tape& tape, const ParamStore& store, ad::Var queries,
                                     const std::vector<Eigen::Vector2d>& ref_uv, ad::Var value_map) const {
  const int k = queries.value().dim(0);
  if (static_cast<int>(ref_uv.size()) != k) throw ConfigError("deformable attention: one reference point per query");
  if (value_map.value().rank() != 3 || value_map.value().dim(2) != cfg_.channels) {
    throw ConfigError("deformable attention: value map must be {H, W, C}");
  }
  const int heads = cfg_.heads, pts = spec_.points;
  const int samples = k * heads * pts;

  ad::Var offsets = ad::reshape(offset_head()(tape, store, queries), {samples, 2});
  Tensor ref({samples, 2});
  for (int q = 0; q < k; ++q)
    for (int s = 0; s < heads * pts; ++s) {
      ref.at(q * heads * pts + s, 0) = ref_uv[static_cast<std::size_t>(q)].x();
      ref.at(q * heads * pts + s, 1) = ref_uv[static_cast<std::size_t>(q)].y();
    }
  ad::Var locations = ad::add_constant(offsets, ref);
  ad::Var weights = ad::group_softmax(weight_head()(tape, store, queries), pts);
  ad::Var sampled = ad::bilinear_sample(value_map, locations);
  ad::Var values = value_proj()(tape, store, sampled);
  ad::Var blended = ad::head_blend(weights, values, heads, pts);
  return out_proj()(tape, store, blended);
}

Tensor sinusoidal_encoding(std::span<const Eigen::Vector2d> row_col, int channels) {
  if (channels % 4 != 0) throw ConfigError("sinusoidal encoding: channels must be a multiple of 4");
  const int n = static_cast<int>(row_col.size());
  const int quarter = channels / 4;
  Tensor out({n, channels});
  for (int i = 0; i < n; ++i) {
    for (int axis = 0; axis < 2; ++axis) {
      const double pos = axis == 0 ? row_col[static_cast<std::size_t>(i)].x() : row_col[static_cast<std::size_t>(i)].y();
      for (int f = 0; f < quarter; ++f) {
        const double freq = std::pow(100.0, -static_cast<double>(f) / quarter);
        out.at(i, axis * 2 * quarter + 2 * f) = std::sin(pos * freq);
        out.at(i, axis * 2 * quarter + 2 * f + 1) = std::cos(pos * freq);
      }
    }
  }
  return out;
}

}  // namespace scenefuse
