// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "scenefuse/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "scenefuse/error.hpp"
#include "scenefuse/geometry.hpp"

namespace scenefuse::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap as_mat(const Tensor& t, int rows, int cols) { return ConstMatMap(t.data(), rows, cols); }
MatMap as_mat(Tensor& t, int rows, int cols) { return MatMap(t.data(), rows, cols); }

Tape& tape_of(Var a) {
  if (!a.valid()) throw ConfigError("operation on an invalid variable");
  return *a.tape;
}

void require_rank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank) {
    throw ConfigError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                      shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                      shape_string(b.shape()));
  }
}

void accumulate(Tape& t, Var v, const Tensor& g) {
  if (!t.needs_grad(v)) return;
  Tensor& buf = t.grad_buffer(v.id);
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

// im2col for a {H, W, C} map; rows are output pixels, columns (ky, kx, c).
void im2col(const Tensor& x, int k, int stride, int pad, int ho, int wo, Tensor& cols) {
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  cols = Tensor({ho * wo, k * k * c});
  double* dst = cols.data();
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * stride - pad + ky;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * stride - pad + kx;
          if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
            std::fill(dst, dst + c, 0.0);
          } else {
            const double* src = x.data() + (static_cast<std::size_t>(iy) * w + ix) * c;
            std::copy(src, src + c, dst);
          }
          dst += c;
        }
      }
    }
  }
}

void col2im_add(const Tensor& cols, int k, int stride, int pad, int ho, int wo, Tensor& dx) {
  const int h = dx.dim(0), w = dx.dim(1), c = dx.dim(2);
  const double* src = cols.data();
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * stride - pad + ky;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * stride - pad + kx;
          if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
            double* d = dx.data() + (static_cast<std::size_t>(iy) * w + ix) * c;
            for (int ch = 0; ch < c; ++ch) d[ch] += src[ch];
          }
          src += c;
        }
      }
    }
  }
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    accumulate(tp, a, g);
    accumulate(tp, b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    accumulate(tp, a, g);
    if (tp.needs_grad(b)) {
      Tensor& buf = tp.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) buf[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (tp.needs_grad(a)) {
      const Tensor& bv = tp.value(b);
      Tensor& buf = tp.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i] * bv[i];
    }
    if (tp.needs_grad(b)) {
      const Tensor& av = tp.value(a);
      Tensor& buf = tp.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  return t.record(std::move(out), {a}, [a, factor](Tape& tp, const Tensor& g) {
    Tensor& buf = tp.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += factor * g[i];
  });
}

Var add_constant(Var a, const Tensor& c) {
  Tape& t = tape_of(a);
  require_same_shape(a.value(), c, "add_constant");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
  return t.record(std::move(out), {a}, [a](Tape& tp, const Tensor& g) { accumulate(tp, a, g); });
}

Var add_rowvec(Var x, Var b) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  require_rank(xv, 2, "add_rowvec");
  const int n = xv.dim(0), m = xv.dim(1);
  if (static_cast<int>(b.value().size()) != m) throw ConfigError("add_rowvec: bias length mismatch");
  Tensor out = xv;
  const Tensor& bv = b.value();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.at(i, j) += bv[static_cast<std::size_t>(j)];
  return t.record(std::move(out), {x, b}, [x, b, n, m](Tape& tp, const Tensor& g) {
    accumulate(tp, x, g);
    if (tp.needs_grad(b)) {
      Tensor& buf = tp.grad_buffer(b.id);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) buf[static_cast<std::size_t>(j)] += g.at(i, j);
    }
  });
}

Var mul_rows(Var x, std::vector<double> factor) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  require_rank(xv, 2, "mul_rows");
  const int n = xv.dim(0), m = xv.dim(1);
  if (static_cast<int>(factor.size()) != n) throw ConfigError("mul_rows: factor length mismatch");
  Tensor out = xv;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.at(i, j) *= factor[static_cast<std::size_t>(i)];
  return t.record(std::move(out), {x}, [x, n, m, f = std::move(factor)](Tape& tp, const Tensor& g) {
    Tensor& buf = tp.grad_buffer(x.id);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) buf.at(i, j) += g.at(i, j) * f[static_cast<std::size_t>(i)];
  });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "matmul");
  require_rank(bv, 2, "matmul");
  const int n = av.dim(0), k = av.dim(1), m = bv.dim(1);
  if (bv.dim(0) != k) {
    throw ConfigError("matmul: inner dimension mismatch " + shape_string(av.shape()) + " x " +
                      shape_string(bv.shape()));
  }
  Tensor out({n, m});
  as_mat(out, n, m).noalias() = as_mat(av, n, k) * as_mat(bv, k, m);
  return t.record(std::move(out), {a, b}, [a, b, n, k, m](Tape& tp, const Tensor& g) {
    const auto gm = as_mat(g, n, m);
    if (tp.needs_grad(a)) as_mat(tp.grad_buffer(a.id), n, k).noalias() += gm * as_mat(tp.value(b), k, m).transpose();
    if (tp.needs_grad(b)) as_mat(tp.grad_buffer(b.id), k, m).noalias() += as_mat(tp.value(a), n, k).transpose() * gm;
  });
}

Var linear(Var x, Var w, Var b) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank(xv, 2, "linear");
  require_rank(wv, 2, "linear");
  const int n = xv.dim(0), in = xv.dim(1), out_dim = wv.dim(1);
  if (wv.dim(0) != in) {
    throw ConfigError("linear: input width " + std::to_string(in) + " vs weight " + shape_string(wv.shape()));
  }
  Tensor out({n, out_dim});
  auto om = as_mat(out, n, out_dim);
  om.noalias() = as_mat(xv, n, in) * as_mat(wv, in, out_dim);
  const bool has_bias = b.valid();
  if (has_bias) {
    if (static_cast<int>(b.value().size()) != out_dim) throw ConfigError("linear: bias length mismatch");
    om.rowwise() += as_mat(b.value(), 1, out_dim).row(0);
  }
  std::vector<Var> parents{x, w};
  if (has_bias) parents.push_back(b);
  return t.record(std::move(out), parents, [x, w, b, n, in, out_dim, has_bias](Tape& tp, const Tensor& g) {
    const auto gm = as_mat(g, n, out_dim);
    if (tp.needs_grad(x)) {
      as_mat(tp.grad_buffer(x.id), n, in).noalias() += gm * as_mat(tp.value(w), in, out_dim).transpose();
    }
    if (tp.needs_grad(w)) {
      as_mat(tp.grad_buffer(w.id), in, out_dim).noalias() += as_mat(tp.value(x), n, in).transpose() * gm;
    }
    if (has_bias && tp.needs_grad(b)) as_mat(tp.grad_buffer(b.id), 1, out_dim) += gm.colwise().sum();
  });
}

Var relu(Var x) {
  Tape& t = tape_of(x);
  Tensor out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return t.record(std::move(out), {x}, [x](Tape& tp, const Tensor& g) {
    const Tensor& xv = tp.value(x);
    Tensor& buf = tp.grad_buffer(x.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) buf[i] += g[i];
  });
}

Var sigmoid(Var x) {
  Tape& t = tape_of(x);
  Tensor out = x.value();
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  const int self = static_cast<int>(t.num_nodes());
  return t.record(std::move(out), {x}, [x, self](Tape& tp, const Tensor& g) {
    const Tensor& y = tp.value(Var{&tp, self});
    Tensor& buf = tp.grad_buffer(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  require_rank(xv, 2, "layer_norm");
  const int n = xv.dim(0), m = xv.dim(1);
  if (static_cast<int>(gamma.value().size()) != m || static_cast<int>(beta.value().size()) != m) {
    throw ConfigError("layer_norm: gamma/beta length mismatch");
  }
  auto xhat = std::make_shared<Tensor>(Shape{n, m});
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
  Tensor out({n, m});
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (int i = 0; i < n; ++i) {
    double mean = 0.0;
    for (int j = 0; j < m; ++j) mean += xv.at(i, j);
    mean /= m;
    double var = 0.0;
    for (int j = 0; j < m; ++j) {
      const double d = xv.at(i, j) - mean;
      var += d * d;
    }
    var /= m;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(i)] = is;
    for (int j = 0; j < m; ++j) {
      const double h = (xv.at(i, j) - mean) * is;
      xhat->at(i, j) = h;
      out.at(i, j) = h * gv[static_cast<std::size_t>(j)] + bv[static_cast<std::size_t>(j)];
    }
  }
  return t.record(std::move(out), {x, gamma, beta}, [=](Tape& tp, const Tensor& g) {
    const Tensor& gv = tp.value(gamma);
    if (tp.needs_grad(gamma) || tp.needs_grad(beta)) {
      Tensor dg({m}), db({m});
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          dg[static_cast<std::size_t>(j)] += g.at(i, j) * xhat->at(i, j);
          db[static_cast<std::size_t>(j)] += g.at(i, j);
        }
      accumulate(tp, gamma, dg);
      accumulate(tp, beta, db);
    }
    if (tp.needs_grad(x)) {
      Tensor& buf = tp.grad_buffer(x.id);
      for (int i = 0; i < n; ++i) {
        double mean_d = 0.0, mean_dx = 0.0;
        for (int j = 0; j < m; ++j) {
          const double d = g.at(i, j) * gv[static_cast<std::size_t>(j)];
          mean_d += d;
          mean_dx += d * xhat->at(i, j);
        }
        mean_d /= m;
        mean_dx /= m;
        const double is = (*inv_std)[static_cast<std::size_t>(i)];
        for (int j = 0; j < m; ++j) {
          const double d = g.at(i, j) * gv[static_cast<std::size_t>(j)];
          buf.at(i, j) += is * (d - mean_d - xhat->at(i, j) * mean_dx);
        }
      }
    }
  });
}

Var reshape(Var x, Shape shape) {
  Tape& t = tape_of(x);
  Tensor out = x.value().reshaped(std::move(shape));
  return t.record(std::move(out), {x}, [x](Tape& tp, const Tensor& g) {
    Tensor& buf = tp.grad_buffer(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ConfigError("concat_cols: no inputs");
  Tape& t = tape_of(parts.front());
  const int n = parts.front().value().dim(0);
  std::vector<int> widths;
  int total = 0;
  for (const Var& p : parts) {
    require_rank(p.value(), 2, "concat_cols");
    if (p.value().dim(0) != n) throw ConfigError("concat_cols: row count mismatch");
    widths.push_back(p.value().dim(1));
    total += widths.back();
  }
  Tensor out({n, total});
  int off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < widths[k]; ++j) out.at(i, off + j) = pv.at(i, j);
    off += widths[k];
  }
  return t.record(std::move(out), parts, [parts, widths, n](Tape& tp, const Tensor& g) {
    int off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (tp.needs_grad(parts[k])) {
        Tensor& buf = tp.grad_buffer(parts[k].id);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < widths[k]; ++j) buf.at(i, j) += g.at(i, off + j);
      }
      off += widths[k];
    }
  });
}

Var slice_cols(Var x, int begin, int count) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  require_rank(xv, 2, "slice_cols");
  const int n = xv.dim(0);
  if (begin < 0 || count < 0 || begin + count > xv.dim(1)) throw ConfigError("slice_cols: out of range");
  Tensor out({n, count});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < count; ++j) out.at(i, j) = xv.at(i, begin + j);
  return t.record(std::move(out), {x}, [x, n, begin, count](Tape& tp, const Tensor& g) {
    Tensor& buf = tp.grad_buffer(x.id);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < count; ++j) buf.at(i, begin + j) += g.at(i, j);
  });
}

Var gather_rows(Var x, std::vector<int> index) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  require_rank(xv, 2, "gather_rows");
  const int rows = xv.dim(0), m = xv.dim(1);
  const int n = static_cast<int>(index.size());
  Tensor out({n, m});
  for (int i = 0; i < n; ++i) {
    const int src = index[static_cast<std::size_t>(i)];
    if (src < 0) continue;
    if (src >= rows) throw ConfigError("gather_rows: index out of range");
    std::copy_n(xv.data() + static_cast<std::size_t>(src) * m, m, out.data() + static_cast<std::size_t>(i) * m);
  }
  return t.record(std::move(out), {x}, [x, m, idx = std::move(index)](Tape& tp, const Tensor& g) {
    Tensor& buf = tp.grad_buffer(x.id);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0) continue;
      double* d = buf.data() + static_cast<std::size_t>(idx[i]) * m;
      const double* s = g.data() + i * m;
      for (int j = 0; j < m; ++j) d[j] += s[j];
    }
  });
}

Var scatter_rows(Var x, std::vector<int> index, int rows_out) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  require_rank(xv, 2, "scatter_rows");
  const int n = xv.dim(0), m = xv.dim(1);
  if (static_cast<int>(index.size()) != n) throw ConfigError("scatter_rows: index length mismatch");
  Tensor out({rows_out, m});
  for (int i = 0; i < n; ++i) {
    const int dst = index[static_cast<std::size_t>(i)];
    if (dst < 0) continue;
    if (dst >= rows_out) throw ConfigError("scatter_rows: index out of range");
    for (int j = 0; j < m; ++j) out.at(dst, j) += xv.at(i, j);
  }
  return t.record(std::move(out), {x}, [x, m, idx = std::move(index)](Tape& tp, const Tensor& g) {
    Tensor& buf = tp.grad_buffer(x.id);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0) continue;
      for (int j = 0; j < m; ++j) buf.at(static_cast<int>(i), j) += g.at(idx[i], j);
    }
  });
}

Var segment_max(Var x, std::vector<int> offsets) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  require_rank(xv, 2, "segment_max");
  const int m = xv.dim(1);
  const int groups = static_cast<int>(offsets.size()) - 1;
  if (groups < 0 || offsets.back() > xv.dim(0)) throw ConfigError("segment_max: bad offsets");
  Tensor out({groups, m});
  auto argmax = std::make_shared<std::vector<int>>(static_cast<std::size_t>(groups) * m, -1);
  for (int gi = 0; gi < groups; ++gi) {
    const int b = offsets[static_cast<std::size_t>(gi)], e = offsets[static_cast<std::size_t>(gi) + 1];
    if (b >= e) continue;
    for (int j = 0; j < m; ++j) {
      int best = b;
      for (int r = b + 1; r < e; ++r)
        if (xv.at(r, j) > xv.at(best, j)) best = r;
      out.at(gi, j) = xv.at(best, j);
      (*argmax)[static_cast<std::size_t>(gi) * m + j] = best;
    }
  }
  return t.record(std::move(out), {x}, [x, m, groups, argmax](Tape& tp, const Tensor& g) {
    Tensor& buf = tp.grad_buffer(x.id);
    for (int gi = 0; gi < groups; ++gi)
      for (int j = 0; j < m; ++j) {
        const int r = (*argmax)[static_cast<std::size_t>(gi) * m + j];
        if (r >= 0) buf.at(r, j) += g.at(gi, j);
      }
  });
}

Var segment_sum(Var x, std::vector<int> offsets) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  require_rank(xv, 2, "segment_sum");
  const int m = xv.dim(1);
  const int groups = static_cast<int>(offsets.size()) - 1;
  if (groups < 0 || offsets.back() > xv.dim(0)) throw ConfigError("segment_sum: bad offsets");
  Tensor out({groups, m});
  for (int gi = 0; gi < groups; ++gi)
    for (int r = offsets[static_cast<std::size_t>(gi)]; r < offsets[static_cast<std::size_t>(gi) + 1]; ++r)
      for (int j = 0; j < m; ++j) out.at(gi, j) += xv.at(r, j);
  return t.record(std::move(out), {x}, [x, m, groups, off = std::move(offsets)](Tape& tp, const Tensor& g) {
    Tensor& buf = tp.grad_buffer(x.id);
    for (int gi = 0; gi < groups; ++gi)
      for (int r = off[static_cast<std::size_t>(gi)]; r < off[static_cast<std::size_t>(gi) + 1]; ++r)
        for (int j = 0; j < m; ++j) buf.at(r, j) += g.at(gi, j);
  });
}

Var conv2d(Var x, Var w, Var b, int stride, int pad) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank(xv, 3, "conv2d");
  require_rank(wv, 4, "conv2d");
  const int h = xv.dim(0), wd = xv.dim(1), cin = xv.dim(2);
  const int k = wv.dim(0), cout = wv.dim(3);
  if (wv.dim(1) != k || wv.dim(2) != cin) {
    throw ConfigError("conv2d: kernel " + shape_string(wv.shape()) + " incompatible with input " +
                      shape_string(xv.shape()));
  }
  if (stride < 1 || pad < 0) throw ConfigError("conv2d: bad stride/padding");
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (wd + 2 * pad - k) / stride + 1;
  if (ho <= 0 || wo <= 0) throw ConfigError("conv2d: input smaller than kernel");
  const int kk = k * k * cin;
  Tensor cols;
  im2col(xv, k, stride, pad, ho, wo, cols);
  Tensor out({ho, wo, cout});
  auto om = as_mat(out, ho * wo, cout);
  om.noalias() = as_mat(cols, ho * wo, kk) * as_mat(wv, kk, cout);
  const bool has_bias = b.valid();
  if (has_bias) {
    if (static_cast<int>(b.value().size()) != cout) throw ConfigError("conv2d: bias length mismatch");
    om.rowwise() += as_mat(b.value(), 1, cout).row(0);
  }
  std::vector<Var> parents{x, w};
  if (has_bias) parents.push_back(b);
  return t.record(std::move(out), parents, [=](Tape& tp, const Tensor& g) {
    const auto gm = as_mat(g, ho * wo, cout);
    if (tp.needs_grad(w)) {
      Tensor cols;
      im2col(tp.value(x), k, stride, pad, ho, wo, cols);
      as_mat(tp.grad_buffer(w.id), kk, cout).noalias() += as_mat(cols, ho * wo, kk).transpose() * gm;
    }
    if (has_bias && tp.needs_grad(b)) as_mat(tp.grad_buffer(b.id), 1, cout) += gm.colwise().sum();
    if (tp.needs_grad(x)) {
      Tensor dcols({ho * wo, kk});
      as_mat(dcols, ho * wo, kk).noalias() = gm * as_mat(tp.value(w), kk, cout).transpose();
      col2im_add(dcols, k, stride, pad, ho, wo, tp.grad_buffer(x.id));
    }
  });
}

Var bilinear_sample(Var map, Var uv) {
  Tape& t = tape_of(map);
  const Tensor& mv = map.value();
  const Tensor& uvv = uv.value();
  require_rank(mv, 3, "bilinear_sample");
  require_rank(uvv, 2, "bilinear_sample");
  if (uvv.dim(1) != 2) throw ConfigError("bilinear_sample: uv must be {N, 2}");
  const int h = mv.dim(0), w = mv.dim(1), c = mv.dim(2);
  const int n = uvv.dim(0);
  auto in_map = [h, w](const BilinearTap& tap) { return tap.row >= 0 && tap.row < h && tap.col >= 0 && tap.col < w; };
  Tensor out({n, c});
  for (int i = 0; i < n; ++i) {
    const double u = uvv.at(i, 0), v = uvv.at(i, 1);
    if (!std::isfinite(u) || !std::isfinite(v)) throw ConfigError("bilinear_sample: non-finite coordinate");
    if (u <= -1.0 || v <= -1.0 || u >= w || v >= h) continue;
    for (const BilinearTap& tap : bilinear_taps(u, v)) {
      if (!in_map(tap)) continue;
      const double* src = mv.data() + (static_cast<std::size_t>(tap.row) * w + tap.col) * c;
      double* dst = out.data() + static_cast<std::size_t>(i) * c;
      for (int k = 0; k < c; ++k) dst[k] += tap.weight * src[k];
    }
  }
  return t.record(std::move(out), {map, uv}, [=](Tape& tp, const Tensor& g) {
    const Tensor& mv = tp.value(map);
    const Tensor& uvv = tp.value(uv);
    const bool want_map = tp.needs_grad(map);
    const bool want_uv = tp.needs_grad(uv);
    Tensor* dmap = want_map ? &tp.grad_buffer(map.id) : nullptr;
    Tensor* duv = want_uv ? &tp.grad_buffer(uv.id) : nullptr;
    for (int i = 0; i < n; ++i) {
      const double u = uvv.at(i, 0), v = uvv.at(i, 1);
      if (u <= -1.0 || v <= -1.0 || u >= w || v >= h) continue;
      const double* gi = g.data() + static_cast<std::size_t>(i) * c;
      for (const BilinearTap& tap : bilinear_taps(u, v)) {
        if (!in_map(tap)) continue;
        const std::size_t base = (static_cast<std::size_t>(tap.row) * w + tap.col) * c;
        if (dmap) {
          double* d = dmap->data() + base;
          for (int k = 0; k < c; ++k) d[k] += tap.weight * gi[k];
        }
        if (duv) {
          double dot = 0.0;
          const double* src = mv.data() + base;
          for (int k = 0; k < c; ++k) dot += src[k] * gi[k];
          duv->at(i, 0) += tap.d_du * dot;
          duv->at(i, 1) += tap.d_dv * dot;
        }
      }
    }
  });
}

Var group_softmax(Var x, int group) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  require_rank(xv, 2, "group_softmax");
  const int n = xv.dim(0), m = xv.dim(1);
  if (group < 1 || m % group != 0) throw ConfigError("group_softmax: width not divisible by group");
  Tensor out({n, m});
  for (int i = 0; i < n; ++i)
    for (int g0 = 0; g0 < m; g0 += group) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = g0; j < g0 + group; ++j) mx = std::max(mx, xv.at(i, j));
      double s = 0.0;
      for (int j = g0; j < g0 + group; ++j) s += (out.at(i, j) = std::exp(xv.at(i, j) - mx));
      for (int j = g0; j < g0 + group; ++j) out.at(i, j) /= s;
    }
  const int self = static_cast<int>(t.num_nodes());
  return t.record(std::move(out), {x}, [x, n, m, group, self](Tape& tp, const Tensor& g) {
    const Tensor& y = tp.value(Var{&tp, self});
    Tensor& buf = tp.grad_buffer(x.id);
    for (int i = 0; i < n; ++i)
      for (int g0 = 0; g0 < m; g0 += group) {
        double dot = 0.0;
        for (int j = g0; j < g0 + group; ++j) dot += y.at(i, j) * g.at(i, j);
        for (int j = g0; j < g0 + group; ++j) buf.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
      }
  });
}

Var head_blend(Var weights, Var samples, int heads, int points) {
  Tape& t = tape_of(weights);
  const Tensor& wv = weights.value();
  const Tensor& sv = samples.value();
  require_rank(wv, 2, "head_blend");
  require_rank(sv, 2, "head_blend");
  const int k = wv.dim(0), c = sv.dim(1);
  if (wv.dim(1) != heads * points || sv.dim(0) != k * heads * points || c % heads != 0) {
    throw ConfigError("head_blend: inconsistent shapes " + shape_string(wv.shape()) + " / " +
                      shape_string(sv.shape()));
  }
  const int dh = c / heads;
  Tensor out({k, c});
  for (int q = 0; q < k; ++q)
    for (int h = 0; h < heads; ++h)
      for (int p = 0; p < points; ++p) {
        const double a = wv.at(q, h * points + p);
        const int row = (q * heads + h) * points + p;
        for (int j = 0; j < dh; ++j) out.at(q, h * dh + j) += a * sv.at(row, h * dh + j);
      }
  return t.record(std::move(out), {weights, samples}, [=](Tape& tp, const Tensor& g) {
    const Tensor& wv = tp.value(weights);
    const Tensor& sv = tp.value(samples);
    Tensor* dw = tp.needs_grad(weights) ? &tp.grad_buffer(weights.id) : nullptr;
    Tensor* ds = tp.needs_grad(samples) ? &tp.grad_buffer(samples.id) : nullptr;
    for (int q = 0; q < k; ++q)
      for (int h = 0; h < heads; ++h)
        for (int p = 0; p < points; ++p) {
          const int row = (q * heads + h) * points + p;
          const double a = wv.at(q, h * points + p);
          double dot = 0.0;
          for (int j = 0; j < dh; ++j) {
            const double gj = g.at(q, h * dh + j);
            dot += gj * sv.at(row, h * dh + j);
            if (ds) ds->at(row, h * dh + j) += a * gj;
          }
          if (dw) dw->at(q, h * points + p) += dot;
        }
  });
}

Var sum(Var x) {
  Tape& t = tape_of(x);
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return t.record(Tensor::scalar(s), {x}, [x](Tape& tp, const Tensor& g) {
    Tensor& buf = tp.grad_buffer(x.id);
    for (double& v : buf.values()) v += g[0];
  });
}

Var weighted_sum(Var x, const Tensor& w) {
  Tape& t = tape_of(x);
  if (w.size() != x.value().size()) throw ConfigError("weighted_sum: weight size mismatch");
  double s = 0.0;
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) s += w[i] * xv[i];
  return t.record(Tensor::scalar(s), {x}, [x, w](Tape& tp, const Tensor& g) {
    Tensor& buf = tp.grad_buffer(x.id);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[0] * w[i];
  });
}

}  // namespace scenefuse::ad
