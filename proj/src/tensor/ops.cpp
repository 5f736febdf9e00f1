// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "stpotr/error.hpp"
#include "stpotr/tensor.hpp"

namespace stpotr {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::size_t normalize_axis(int axis, std::size_t ndim) {
  const int n = static_cast<int>(ndim);
  const int a = axis < 0 ? axis + n : axis;
  if (a < 0 || a >= n) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(ndim));
  }
  return static_cast<std::size_t>(a);
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t n = std::max(a.size(), b.size());
  Shape out(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
    const std::size_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// For each linear index of `out`, the linear index into `in` under
// broadcasting. Empty result means the identity mapping.
std::vector<std::size_t> broadcast_index(const Shape& in, const Shape& out) {
  if (in == out) return {};
  const std::size_t total = numel_of(out);
  std::vector<std::size_t> index(total);
  const std::size_t n_in = numel_of(in);
  const std::size_t offset = out.size() - in.size();
  // Trailing-suffix case (bias vectors): in matches the last dims of out.
  bool suffix = true;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] != out[offset + i]) {
      suffix = false;
      break;
    }
  }
  if (suffix) {
    for (std::size_t i = 0; i < total; ++i) index[i] = i % n_in;
    return index;
  }
  std::vector<std::size_t> stride(out.size(), 0);
  std::size_t s = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    stride[offset + i] = in[i] == 1 ? 0 : s;
    s *= in[i];
  }
  std::vector<std::size_t> counter(out.size(), 0);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < total; ++i) {
    index[i] = pos;
    for (std::size_t d = out.size(); d-- > 0;) {
      ++counter[d];
      pos += stride[d];
      if (counter[d] < out[d]) break;
      pos -= stride[d] * counter[d];
      counter[d] = 0;
    }
  }
  return index;
}

inline std::size_t map_index(const std::vector<std::size_t>& index, std::size_t i) {
  return index.empty() ? i : index[i];
}

template <class Fwd, class GradA, class GradB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, GradA grad_a, GradB grad_b) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
  auto ia = broadcast_index(a.shape(), out_shape);
  auto ib = broadcast_index(b.shape(), out_shape);
  const std::size_t n = numel_of(out_shape);
  std::vector<double> out(n);
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(da[map_index(ia, i)], db[map_index(ib, i)]);
  return make_result(
      std::move(out_shape), std::move(out), name, {a, b},
      [a, b, ia = std::move(ia), ib = std::move(ib), grad_a, grad_b](std::span<const double> g,
                                                                    std::span<std::vector<double>*> gin) {
        auto da = a.data();
        auto db = b.data();
        if (gin[0]) {
          auto& ga = *gin[0];
          for (std::size_t i = 0; i < g.size(); ++i) {
            const std::size_t ka = map_index(ia, i);
            ga[ka] += grad_a(da[ka], db[map_index(ib, i)], g[i]);
          }
        }
        if (gin[1]) {
          auto& gb = *gin[1];
          for (std::size_t i = 0; i < g.size(); ++i) {
            const std::size_t kb = map_index(ib, i);
            gb[kb] += grad_b(da[map_index(ia, i)], db[kb], g[i]);
          }
        }
      });
}

template <class Fwd, class Grad>
Tensor unary_op(const Tensor& x, const char* name, Fwd fwd, Grad grad) {
  auto dx = x.data();
  std::vector<double> out(dx.size());
  for (std::size_t i = 0; i < dx.size(); ++i) out[i] = fwd(dx[i]);
  return make_result(x.shape(), std::move(out), name, {x},
                     [x, grad](std::span<const double> g, std::span<std::vector<double>*> gin) {
                       auto dx = x.data();
                       auto& gx = *gin[0];
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += grad(dx[i], g[i]);
                     });
}

// Splits `shape` around `axis` into (outer, extent, inner) for strided loops.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};
AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double, double g) { return g; },
      [](double, double, double g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double, double g) { return g; },
      [](double, double, double g) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double g) { return g * y; }, [](double x, double, double g) { return g * x; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(
      a, "add_scalar", [s](double x) { return x + s; }, [](double, double g) { return g; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary_op(
      a, "mul_scalar", [s](double x) { return x * s; }, [s](double, double g) { return g * s; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary_op(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double g) { return x > 0.0 ? g : 0.0; });
}

Tensor abs(const Tensor& a) {
  return unary_op(
      a, "abs", [](double x) { return std::abs(x); },
      [](double x, double g) { return x > 0.0 ? g : (x < 0.0 ? -g : 0.0); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() < 2 || b.ndim() < 2) {
    throw ShapeError("matmul: operands need rank >= 2, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t p = a.dim(-2), q = a.dim(-1), r = b.dim(-1);
  if (b.dim(-2) != q) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);

  if (batch_b.empty()) {
    // Shared right operand: one GEMM over all rows of a.
    const std::size_t rows = a.numel() / q;
    Shape out_shape = batch_a;
    out_shape.push_back(p);
    out_shape.push_back(r);
    std::vector<double> out(rows * r);
    MutMap(out.data(), rows, r).noalias() = ConstMap(a.data().data(), rows, q) * ConstMap(b.data().data(), q, r);
    return make_result(std::move(out_shape), std::move(out), "matmul", {a, b},
                       [a, b, rows, q, r](std::span<const double> g, std::span<std::vector<double>*> gin) {
                         ConstMap gm(g.data(), rows, r);
                         if (gin[0]) {
                           MutMap(gin[0]->data(), rows, q).noalias() +=
                               gm * ConstMap(b.data().data(), q, r).transpose();
                         }
                         if (gin[1]) {
                           MutMap(gin[1]->data(), q, r).noalias() +=
                               ConstMap(a.data().data(), rows, q).transpose() * gm;
                         }
                       });
  }

  Shape batch = broadcast_shape(batch_a, batch_b, "matmul");
  auto ia = broadcast_index(batch_a, batch);
  auto ib = broadcast_index(batch_b, batch);
  const std::size_t n_batch = numel_of(batch);
  Shape out_shape = batch;
  out_shape.push_back(p);
  out_shape.push_back(r);
  std::vector<double> out(n_batch * p * r);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t k = 0; k < n_batch; ++k) {
    MutMap(out.data() + k * p * r, p, r).noalias() =
        ConstMap(pa + map_index(ia, k) * p * q, p, q) * ConstMap(pb + map_index(ib, k) * q * r, q, r);
  }
  return make_result(
      std::move(out_shape), std::move(out), "matmul", {a, b},
      [a, b, ia = std::move(ia), ib = std::move(ib), n_batch, p, q, r](std::span<const double> g,
                                                                      std::span<std::vector<double>*> gin) {
        const double* pa = a.data().data();
        const double* pb = b.data().data();
        for (std::size_t k = 0; k < n_batch; ++k) {
          ConstMap gm(g.data() + k * p * r, p, r);
          const std::size_t ka = map_index(ia, k), kb = map_index(ib, k);
          if (gin[0]) {
            MutMap(gin[0]->data() + ka * p * q, p, q).noalias() += gm * ConstMap(pb + kb * q * r, q, r).transpose();
          }
          if (gin[1]) {
            MutMap(gin[1]->data() + kb * q * r, q, r).noalias() += ConstMap(pa + ka * p * q, p, q).transpose() * gm;
          }
        }
      });
}

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.ndim());
  const AxisSplit s = split_axis(x.shape(), ax);
  auto dx = x.data();
  std::vector<double> out(dx.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      double mx = -INFINITY;
      for (std::size_t k = 0; k < s.extent; ++k) mx = std::max(mx, dx[base + k * s.inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < s.extent; ++k) {
        const double e = std::exp(dx[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < s.extent; ++k) out[base + k * s.inner] /= total;
    }
  }
  auto y = std::make_shared<std::vector<double>>(out);
  return make_result(x.shape(), std::move(out), "softmax", {x},
                     [y, s](std::span<const double> g, std::span<std::vector<double>*> gin) {
                       auto& gx = *gin[0];
                       const auto& yv = *y;
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         for (std::size_t in = 0; in < s.inner; ++in) {
                           const std::size_t base = o * s.extent * s.inner + in;
                           double dot = 0.0;
                           for (std::size_t k = 0; k < s.extent; ++k) {
                             const std::size_t i = base + k * s.inner;
                             dot += g[i] * yv[i];
                           }
                           for (std::size_t k = 0; k < s.extent; ++k) {
                             const std::size_t i = base + k * s.inner;
                             gx[i] += yv[i] * (g[i] - dot);
                           }
                         }
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.ndim() < 1) throw ShapeError("layer_norm: scalar input");
  const std::size_t d = x.dim(-1);
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                     " do not match feature size of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  auto dx = x.data();
  auto dg = gain.data();
  auto db = bias.data();
  auto xhat = std::make_shared<std::vector<double>>(dx.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(dx.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = dx.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * rs;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * dg[j] + db[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), "layer_norm", {x, gain, bias},
      [gain, xhat, rstd, rows, d](std::span<const double> g, std::span<std::vector<double>*> gin) {
        auto dg = gain.data();
        const auto& xh = *xhat;
        std::vector<double> gy(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data() + r * d;
          const double* hr = xh.data() + r * d;
          if (gin[1]) {
            for (std::size_t j = 0; j < d; ++j) (*gin[1])[j] += gr[j] * hr[j];
          }
          if (gin[2]) {
            for (std::size_t j = 0; j < d; ++j) (*gin[2])[j] += gr[j];
          }
          if (gin[0]) {
            double mean_gy = 0.0, mean_gyh = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              gy[j] = gr[j] * dg[j];
              mean_gy += gy[j];
              mean_gyh += gy[j] * hr[j];
            }
            mean_gy /= static_cast<double>(d);
            mean_gyh /= static_cast<double>(d);
            double* gx = gin[0]->data() + r * d;
            const double rs = (*rstd)[r];
            for (std::size_t j = 0; j < d; ++j) gx[j] += rs * (gy[j] - mean_gy - hr[j] * mean_gyh);
          }
        }
      });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), "reshape", {x},
                     [](std::span<const double> g, std::span<std::vector<double>*> gin) {
                       auto& gx = *gin[0];
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                     });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const std::size_t n = x.ndim();
  if (order.size() != n) throw ShapeError("permute: order rank differs from " + shape_str(x.shape()));
  std::vector<bool> seen(n, false);
  for (std::size_t o : order) {
    if (o >= n || seen[o]) throw ShapeError("permute: invalid axis order");
    seen[o] = true;
  }
  const Shape& in = x.shape();
  std::vector<std::size_t> in_stride(n, 1);
  for (std::size_t i = n; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  Shape out_shape(n);
  std::vector<std::size_t> src_stride(n);
  for (std::size_t i = 0; i < n; ++i) {
    out_shape[i] = in[order[i]];
    src_stride[i] = in_stride[order[i]];
  }
  // source[i] = linear input index feeding output element i
  const std::size_t total = x.numel();
  std::vector<std::size_t> source(total);
  std::vector<std::size_t> counter(n, 0);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < total; ++i) {
    source[i] = pos;
    for (std::size_t d = n; d-- > 0;) {
      ++counter[d];
      pos += src_stride[d];
      if (counter[d] < out_shape[d]) break;
      pos -= src_stride[d] * counter[d];
      counter[d] = 0;
    }
  }
  auto dx = x.data();
  std::vector<double> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = dx[source[i]];
  return make_result(std::move(out_shape), std::move(out), "permute", {x},
                     [source = std::move(source)](std::span<const double> g, std::span<std::vector<double>*> gin) {
                       auto& gx = *gin[0];
                       for (std::size_t i = 0; i < g.size(); ++i) gx[source[i]] += g[i];
                     });
}

Tensor transpose(const Tensor& x, int axis0, int axis1) {
  std::vector<std::size_t> order(x.ndim());
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[normalize_axis(axis0, x.ndim())], order[normalize_axis(axis1, x.ndim())]);
  return permute(x, order);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t ax = normalize_axis(axis, parts[0].ndim());
  Shape out_shape = parts[0].shape();
  out_shape[ax] = 0;
  std::vector<std::size_t> extents;
  for (const auto& t : parts) {
    if (t.ndim() != out_shape.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < t.ndim(); ++i) {
      if (i != ax && t.shape()[i] != parts[0].shape()[i]) {
        throw ShapeError("concat: " + shape_str(t.shape()) + " incompatible with " + shape_str(parts[0].shape()) +
                         " along axis " + std::to_string(ax));
      }
    }
    extents.push_back(t.shape()[ax]);
    out_shape[ax] += t.shape()[ax];
  }
  const AxisSplit s = split_axis(out_shape, ax);
  std::vector<double> out(numel_of(out_shape));
  std::size_t start = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto dp = parts[p].data();
    const std::size_t block = extents[p] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(dp.data() + o * block, block, out.data() + o * s.extent * s.inner + start * s.inner);
    }
    start += extents[p];
  }
  return make_result(std::move(out_shape), std::move(out), "concat", parts,
                     [extents, s](std::span<const double> g, std::span<std::vector<double>*> gin) {
                       std::size_t start = 0;
                       for (std::size_t p = 0; p < extents.size(); ++p) {
                         const std::size_t block = extents[p] * s.inner;
                         if (gin[p]) {
                           for (std::size_t o = 0; o < s.outer; ++o) {
                             const double* src = g.data() + o * s.extent * s.inner + start * s.inner;
                             double* dst = gin[p]->data() + o * block;
                             for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                           }
                         }
                         start += extents[p];
                       }
                     });
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  const std::size_t ax = normalize_axis(axis, x.ndim());
  if (begin > end || end > x.shape()[ax]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for axis " +
                     std::to_string(ax) + " of " + shape_str(x.shape()));
  }
  const AxisSplit s = split_axis(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape[ax] = end - begin;
  const std::size_t block = (end - begin) * s.inner;
  std::vector<double> out(s.outer * block);
  auto dx = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(dx.data() + o * s.extent * s.inner + begin * s.inner, block, out.data() + o * block);
  }
  return make_result(std::move(out_shape), std::move(out), "slice", {x},
                     [s, begin, block](std::span<const double> g, std::span<std::vector<double>*> gin) {
                       auto& gx = *gin[0];
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         double* dst = gx.data() + o * s.extent * s.inner + begin * s.inner;
                         const double* src = g.data() + o * block;
                         for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                       }
                     });
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (broadcast_shape(x.shape(), shape, "broadcast_to") != shape) {
    throw ShapeError("broadcast_to: " + shape_str(x.shape()) + " does not broadcast to " + shape_str(shape));
  }
  auto index = broadcast_index(x.shape(), shape);
  auto dx = x.data();
  std::vector<double> out(numel_of(shape));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dx[map_index(index, i)];
  return make_result(shape, std::move(out), "broadcast_to", {x},
                     [index = std::move(index)](std::span<const double> g, std::span<std::vector<double>*> gin) {
                       auto& gx = *gin[0];
                       for (std::size_t i = 0; i < g.size(); ++i) gx[map_index(index, i)] += g[i];
                     });
}

Tensor sum(const Tensor& x) {
  auto dx = x.data();
  const double total = std::accumulate(dx.begin(), dx.end(), 0.0);
  return make_result({}, {total}, "sum", {x}, [](std::span<const double> g, std::span<std::vector<double>*> gin) {
    for (double& v : *gin[0]) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of empty tensor");
  return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor dropout(const Tensor& x, double drop_p, bool training, Rng& rng) {
  if (drop_p < 0.0 || drop_p >= 1.0) throw UsageError("dropout probability must be in [0, 1)");
  if (!training || drop_p == 0.0) return x;
  const double scale = 1.0 / (1.0 - drop_p);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  for (double& m : *mask) m = rng.uniform() < drop_p ? 0.0 : scale;
  auto dx = x.data();
  std::vector<double> out(dx.size());
  for (std::size_t i = 0; i < dx.size(); ++i) out[i] = dx[i] * (*mask)[i];
  return make_result(x.shape(), std::move(out), "dropout", {x},
                     [mask](std::span<const double> g, std::span<std::vector<double>*> gin) {
                       auto& gx = *gin[0];
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
                     });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add(matmul(x, weight), bias);
}

}  // namespace stpotr
