#pragma once

#include <algorithm>
#include <cmath>

#include "mafn/tensor.hpp"

// Elementwise, matrix and sequence primitives. Broadcasting is deliberately
// restricted: same-shape, scalar-tensor, and the named vector forms below.
// Anything else is a shape error so every backward rule stays auditable.

namespace mafn {

template <typename T>
inline void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    op_error(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape("add", a, b);
  std::vector<T> out(a.data());
  const auto& bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_op<T>("add", a.shape(), std::move(out), {a, b}, [a, b](TensorNode<T>& o) {
    if (a.requires_grad()) {
      auto& ga = Tensor<T>(a).grad();
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
    }
    if (b.requires_grad()) {
      auto& gb = Tensor<T>(b).grad();
      for (size_t i = 0; i < gb.size(); ++i) gb[i] += o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape("sub", a, b);
  std::vector<T> out(a.data());
  const auto& bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_op<T>("sub", a.shape(), std::move(out), {a, b}, [a, b](TensorNode<T>& o) {
    if (a.requires_grad()) {
      auto& ga = Tensor<T>(a).grad();
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
    }
    if (b.requires_grad()) {
      auto& gb = Tensor<T>(b).grad();
      for (size_t i = 0; i < gb.size(); ++i) gb[i] -= o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape("mul", a, b);
  std::vector<T> out(a.data());
  const auto& bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_op<T>("mul", a.shape(), std::move(out), {a, b}, [a, b](TensorNode<T>& o) {
    if (a.requires_grad()) {
      auto& ga = Tensor<T>(a).grad();
      const auto& bv = b.data();
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * bv[i];
    }
    if (b.requires_grad()) {
      auto& gb = Tensor<T>(b).grad();
      const auto& av = a.data();
      for (size_t i = 0; i < gb.size(); ++i) gb[i] += o.grad[i] * av[i];
    }
  });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  std::vector<T> out(a.data());
  for (auto& v : out) v = -v;
  return make_op<T>("neg", a.shape(), std::move(out), {a}, [a](TensorNode<T>& o) {
    auto& ga = Tensor<T>(a).grad();
    for (size_t i = 0; i < ga.size(); ++i) ga[i] -= o.grad[i];
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  std::vector<T> out(a.data());
  for (auto& v : out) v += c;
  return make_op<T>("add_scalar", a.shape(), std::move(out), {a}, [a](TensorNode<T>& o) {
    auto& ga = Tensor<T>(a).grad();
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  std::vector<T> out(a.data());
  for (auto& v : out) v *= c;
  return make_op<T>("scale", a.shape(), std::move(out), {a}, [a, c](TensorNode<T>& o) {
    auto& ga = Tensor<T>(a).grad();
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += c * o.grad[i];
  });
}

// multiply by a single-element tensor, differentiable in both operands
template <typename T>
Tensor<T> scale_t(const Tensor<T>& a, const Tensor<T>& s) {
  if (s.size() != 1) op_error("scale_t", "scale must be a single-element tensor");
  T c = s.data()[0];
  std::vector<T> out(a.data());
  for (auto& v : out) v *= c;
  return make_op<T>("scale_t", a.shape(), std::move(out), {a, s}, [a, s](TensorNode<T>& o) {
    T c = s.data()[0];
    if (a.requires_grad()) {
      auto& ga = Tensor<T>(a).grad();
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += c * o.grad[i];
    }
    if (s.requires_grad()) {
      T acc = 0;
      const auto& av = a.data();
      for (size_t i = 0; i < av.size(); ++i) acc += o.grad[i] * av[i];
      Tensor<T>(s).grad()[0] += acc;
    }
  });
}

// pick element i of a vector as a [1] tensor
template <typename T>
Tensor<T> take(const Tensor<T>& a, int i) {
  if (a.rank() != 1 || i < 0 || i >= a.dim(0)) op_error("take", "index out of range");
  return make_op<T>("take", {1}, {a.data()[size_t(i)]}, {a}, [a, i](TensorNode<T>& o) {
    Tensor<T>(a).grad()[size_t(i)] += o.grad[0];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape s) {
  if (shape_numel(s) != a.size())
    op_error("reshape", "cannot view " + shape_str(a.shape()) + " as " + shape_str(s));
  std::vector<T> out(a.data());
  return make_op<T>("reshape", std::move(s), std::move(out), {a}, [a](TensorNode<T>& o) {
    auto& ga = Tensor<T>(a).grad();
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) op_error("transpose", "expects a matrix, got " + shape_str(a.shape()));
  const int n = a.dim(0), m = a.dim(1);
  std::vector<T> out(size_t(n) * m);
  const auto& av = a.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out[size_t(j) * n + i] = av[size_t(i) * m + j];
  return make_op<T>("transpose", {m, n}, std::move(out), {a}, [a, n, m](TensorNode<T>& o) {
    auto& ga = Tensor<T>(a).grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) ga[size_t(i) * m + j] += o.grad[size_t(j) * n + i];
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    op_error("matmul", "incompatible shapes " + shape_str(a.shape()) + " x " +
                           shape_str(b.shape()));
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  std::vector<T> out(size_t(n) * m, T(0));
  const auto& av = a.data();
  const auto& bv = b.data();
  for (int i = 0; i < n; ++i) {
    T* orow = out.data() + size_t(i) * m;
    for (int p = 0; p < k; ++p) {
      const T av_ip = av[size_t(i) * k + p];
      const T* brow = bv.data() + size_t(p) * m;
      for (int j = 0; j < m; ++j) orow[j] += av_ip * brow[j];
    }
  }
  return make_op<T>("matmul", {n, m}, std::move(out), {a, b},
                    [a, b, n, k, m](TensorNode<T>& o) {
    if (a.requires_grad()) {
      auto& ga = Tensor<T>(a).grad();
      const auto& bv = b.data();
      for (int i = 0; i < n; ++i) {
        const T* grow = o.grad.data() + size_t(i) * m;
        for (int p = 0; p < k; ++p) {
          const T* brow = bv.data() + size_t(p) * m;
          T acc = 0;
          for (int j = 0; j < m; ++j) acc += grow[j] * brow[j];
          ga[size_t(i) * k + p] += acc;
        }
      }
    }
    if (b.requires_grad()) {
      auto& gb = Tensor<T>(b).grad();
      const auto& av = a.data();
      for (int i = 0; i < n; ++i) {
        const T* grow = o.grad.data() + size_t(i) * m;
        for (int p = 0; p < k; ++p) {
          const T av_ip = av[size_t(i) * k + p];
          T* gbrow = gb.data() + size_t(p) * m;
          for (int j = 0; j < m; ++j) gbrow[j] += av_ip * grow[j];
        }
      }
    }
  });
}

// [N,C] + [C], one bias vector added to every row
template <typename T>
Tensor<T> add_row_vec(const Tensor<T>& x, const Tensor<T>& b) {
  if (x.rank() != 2 || b.rank() != 1 || b.dim(0) != x.dim(1))
    op_error("add_row_vec", "expects [N,C] + [C], got " + shape_str(x.shape()) + " + " +
                                shape_str(b.shape()));
  const int n = x.dim(0), c = x.dim(1);
  std::vector<T> out(x.data());
  const auto& bv = b.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) out[size_t(i) * c + j] += bv[size_t(j)];
  return make_op<T>("add_row_vec", x.shape(), std::move(out), {x, b},
                    [x, b, n, c](TensorNode<T>& o) {
    if (x.requires_grad()) {
      auto& gx = Tensor<T>(x).grad();
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i];
    }
    if (b.requires_grad()) {
      auto& gb = Tensor<T>(b).grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) gb[size_t(j)] += o.grad[size_t(i) * c + j];
    }
  });
}

// [N,C] rows scaled by per-row factors [N]
template <typename T>
Tensor<T> scale_rows(const Tensor<T>& x, const Tensor<T>& s) {
  if (x.rank() != 2 || s.rank() != 1 || s.dim(0) != x.dim(0))
    op_error("scale_rows", "expects [N,C] with [N] factors, got " + shape_str(x.shape()) +
                               " with " + shape_str(s.shape()));
  const int n = x.dim(0), c = x.dim(1);
  std::vector<T> out(x.data());
  const auto& sv = s.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) out[size_t(i) * c + j] *= sv[size_t(i)];
  return make_op<T>("scale_rows", x.shape(), std::move(out), {x, s},
                    [x, s, n, c](TensorNode<T>& o) {
    if (x.requires_grad()) {
      auto& gx = Tensor<T>(x).grad();
      const auto& sv = s.data();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) gx[size_t(i) * c + j] += o.grad[size_t(i) * c + j] * sv[size_t(i)];
    }
    if (s.requires_grad()) {
      auto& gs = Tensor<T>(s).grad();
      const auto& xv = x.data();
      for (int i = 0; i < n; ++i) {
        T acc = 0;
        for (int j = 0; j < c; ++j) acc += o.grad[size_t(i) * c + j] * xv[size_t(i) * c + j];
        gs[size_t(i)] += acc;
      }
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.data());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  return make_op<T>("relu", a.shape(), std::move(out), {a}, [a](TensorNode<T>& o) {
    auto& ga = Tensor<T>(a).grad();
    const auto& av = a.data();
    for (size_t i = 0; i < ga.size(); ++i)
      if (av[i] > T(0)) ga[i] += o.grad[i];
  });
}

namespace testing {
// Fault-injection point for the verification suite's mutation check: when on,
// the sigmoid backward rule flips sign, which the gradient suite must catch.
inline bool& inject_sigmoid_backward_fault() {
  static bool on = false;
  return on;
}
}  // namespace testing

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.data());
  for (auto& v : out) v = T(1) / (T(1) + std::exp(-v));
  return make_op<T>("sigmoid", a.shape(), std::move(out), {a}, [a](TensorNode<T>& o) {
    auto& ga = Tensor<T>(a).grad();
    const T sign = testing::inject_sigmoid_backward_fault() ? T(-1) : T(1);
    for (size_t i = 0; i < ga.size(); ++i) {
      T y = o.value[i];
      ga[i] += sign * o.grad[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
Tensor<T> tanh_act(const Tensor<T>& a) {
  std::vector<T> out(a.data());
  for (auto& v : out) v = std::tanh(v);
  return make_op<T>("tanh", a.shape(), std::move(out), {a}, [a](TensorNode<T>& o) {
    auto& ga = Tensor<T>(a).grad();
    for (size_t i = 0; i < ga.size(); ++i) {
      T y = o.value[i];
      ga[i] += o.grad[i] * (T(1) - y * y);
    }
  });
}

// row-wise softmax over the last axis of [N,M]
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  if (x.rank() != 2) op_error("softmax", "expects a matrix, got " + shape_str(x.shape()));
  const int n = x.dim(0), m = x.dim(1);
  if (m == 0) op_error("softmax", "empty rows");
  std::vector<T> out(x.data());
  for (int i = 0; i < n; ++i) {
    T* row = out.data() + size_t(i) * m;
    T mx = row[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    T sum = 0;
    for (int j = 0; j < m; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < m; ++j) row[j] /= sum;
  }
  return make_op<T>("softmax", x.shape(), std::move(out), {x}, [x, n, m](TensorNode<T>& o) {
    auto& gx = Tensor<T>(x).grad();
    for (int i = 0; i < n; ++i) {
      const T* y = o.value.data() + size_t(i) * m;
      const T* g = o.grad.data() + size_t(i) * m;
      T dot = 0;
      for (int j = 0; j < m; ++j) dot += g[j] * y[j];
      T* gr = gx.data() + size_t(i) * m;
      for (int j = 0; j < m; ++j) gr[j] += y[j] * (g[j] - dot);
    }
  });
}

// softmax over a vector [n]
template <typename T>
Tensor<T> softmax_vec(const Tensor<T>& x) {
  if (x.rank() != 1) op_error("softmax_vec", "expects a vector");
  return reshape(softmax_rows(reshape(x, {1, x.dim(0)})), {x.dim(0)});
}

// per-row normalization of [N,C] with learned scale/shift [C]
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
  if (x.rank() != 2 || gamma.rank() != 1 || beta.rank() != 1 || gamma.dim(0) != x.dim(1) ||
      beta.dim(0) != x.dim(1))
    op_error("layer_norm", "expects [N,C] with [C] scale/shift");
  const int n = x.dim(0), c = x.dim(1);
  std::vector<T> out(size_t(n) * c);
  std::vector<T> xhat(size_t(n) * c);
  std::vector<T> inv_std(size_t(n), T(0));
  const auto& xv = x.data();
  const auto& gv = gamma.data();
  const auto& bv = beta.data();
  for (int i = 0; i < n; ++i) {
    const T* row = xv.data() + size_t(i) * c;
    T mean = 0;
    for (int j = 0; j < c; ++j) mean += row[j];
    mean /= T(c);
    T var = 0;
    for (int j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= T(c);
    T inv = T(1) / std::sqrt(var + eps);
    inv_std[size_t(i)] = inv;
    for (int j = 0; j < c; ++j) {
      T xh = (row[j] - mean) * inv;
      xhat[size_t(i) * c + j] = xh;
      out[size_t(i) * c + j] = gv[size_t(j)] * xh + bv[size_t(j)];
    }
  }
  return make_op<T>("layer_norm", x.shape(), std::move(out), {x, gamma, beta},
                    [x, gamma, beta, n, c, xhat = std::move(xhat),
                     inv_std = std::move(inv_std)](TensorNode<T>& o) {
    const auto& gv = gamma.data();
    for (int i = 0; i < n; ++i) {
      const T* g = o.grad.data() + size_t(i) * c;
      const T* xh = xhat.data() + size_t(i) * c;
      if (gamma.requires_grad()) {
        auto& gg = Tensor<T>(gamma).grad();
        for (int j = 0; j < c; ++j) gg[size_t(j)] += g[j] * xh[j];
      }
      if (beta.requires_grad()) {
        auto& gb = Tensor<T>(beta).grad();
        for (int j = 0; j < c; ++j) gb[size_t(j)] += g[j];
      }
      if (x.requires_grad()) {
        auto& gx = Tensor<T>(x).grad();
        T m1 = 0, m2 = 0;
        for (int j = 0; j < c; ++j) {
          T gh = g[j] * gv[size_t(j)];
          m1 += gh;
          m2 += gh * xh[j];
        }
        m1 /= T(c);
        m2 /= T(c);
        T* gr = gx.data() + size_t(i) * c;
        for (int j = 0; j < c; ++j) {
          T gh = g[j] * gv[size_t(j)];
          gr[j] += inv_std[size_t(i)] * (gh - m1 - xh[j] * m2);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.data()) acc += v;
  return make_op<T>("sum", {1}, {acc}, {a}, [a](TensorNode<T>& o) {
    auto& ga = Tensor<T>(a).grad();
    for (auto& g : ga) g += o.grad[0];
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.data()) acc += v;
  const T inv = T(1) / T(a.size());
  return make_op<T>("mean", {1}, {acc * inv}, {a}, [a, inv](TensorNode<T>& o) {
    auto& ga = Tensor<T>(a).grad();
    for (auto& g : ga) g += o.grad[0] * inv;
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) op_error("concat", "no inputs");
  const int rank = parts[0].rank();
  if (axis < 0 || axis >= rank) op_error("concat", "bad axis");
  Shape out_shape = parts[0].shape();
  int64_t axis_total = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank) op_error("concat", "rank mismatch");
    for (int d = 0; d < rank; ++d)
      if (d != axis && p.dim(d) != out_shape[size_t(d)])
        op_error("concat", "shape mismatch on non-concat axis");
    axis_total += p.dim(axis);
  }
  out_shape[size_t(axis)] = int(axis_total);
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= out_shape[size_t(d)];
  for (int d = axis + 1; d < rank; ++d) inner *= out_shape[size_t(d)];

  std::vector<T> out(size_t(shape_numel(out_shape)));
  const int64_t out_block = axis_total * inner;
  int64_t off = 0;
  for (const auto& p : parts) {
    const int64_t blk = int64_t(p.dim(axis)) * inner;
    const auto& pv = p.data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy(pv.begin() + o * blk, pv.begin() + (o + 1) * blk,
                out.begin() + o * out_block + off);
    off += blk;
  }
  return make_op<T>("concat", out_shape, std::move(out), parts,
                    [parts, outer, inner, out_block](TensorNode<T>& o) {
    int64_t off = 0;
    for (const auto& p : parts) {
      const int64_t blk = int64_t(p.size()) / outer;
      if (p.requires_grad()) {
        auto& gp = Tensor<T>(p).grad();
        for (int64_t ob = 0; ob < outer; ++ob)
          for (int64_t i = 0; i < blk; ++i)
            gp[size_t(ob * blk + i)] += o.grad[size_t(ob * out_block + off + i)];
      }
      off += blk;
    }
  });
}

// inverse of concat: cut x along `axis` into pieces of the given extents
template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, int axis, const std::vector<int>& sizes) {
  const int rank = x.rank();
  if (axis < 0 || axis >= rank) op_error("split", "bad axis");
  int64_t total = 0;
  for (int s : sizes) total += s;
  if (total != x.dim(axis)) op_error("split", "piece sizes do not cover the axis");
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  for (int d = axis + 1; d < rank; ++d) inner *= x.dim(d);
  const int64_t in_block = int64_t(x.dim(axis)) * inner;

  std::vector<Tensor<T>> out;
  int64_t off = 0;
  for (int s : sizes) {
    Shape ps = x.shape();
    ps[size_t(axis)] = s;
    const int64_t blk = int64_t(s) * inner;
    std::vector<T> pv(size_t(outer * blk));
    const auto& xv = x.data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy(xv.begin() + o * in_block + off, xv.begin() + o * in_block + off + blk,
                pv.begin() + o * blk);
    const int64_t off_here = off;
    out.push_back(make_op<T>("split", ps, std::move(pv), {x},
                             [x, outer, inner, in_block, blk, off_here](TensorNode<T>& o) {
      auto& gx = Tensor<T>(x).grad();
      for (int64_t ob = 0; ob < outer; ++ob)
        for (int64_t i = 0; i < blk; ++i)
          gx[size_t(ob * in_block + off_here + i)] += o.grad[size_t(ob * blk + i)];
    }));
    off += blk;
  }
  return out;
}

// gather rows of an embedding table [V,C] by token id
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<int>& ids) {
  if (table.rank() != 2) op_error("embedding", "table must be [V,C]");
  if (ids.empty()) op_error("embedding", "empty id list");
  const int v = table.dim(0), c = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= v)
      op_error("embedding", "token id " + std::to_string(id) + " outside table of " +
                                 std::to_string(v));
  const int m = int(ids.size());
  std::vector<T> out(size_t(m) * c);
  const auto& tv = table.data();
  for (int i = 0; i < m; ++i)
    std::copy(tv.begin() + size_t(ids[size_t(i)]) * c, tv.begin() + size_t(ids[size_t(i)] + 1) * c,
              out.begin() + size_t(i) * c);
  return make_op<T>("embedding", {m, c}, std::move(out), {table},
                    [table, ids, c](TensorNode<T>& o) {
    auto& gt = Tensor<T>(table).grad();
    for (size_t i = 0; i < ids.size(); ++i)
      for (int j = 0; j < c; ++j)
        gt[size_t(ids[i]) * c + j] += o.grad[i * size_t(c) + size_t(j)];
  });
}

// scaled dot-product attention; softmax over the key axis
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
    op_error("attention", "Q, K, V must be matrices");
  if (q.dim(1) != k.dim(1))
    op_error("attention", "Q/K feature dims differ: " + shape_str(q.shape()) + " vs " +
                              shape_str(k.shape()));
  if (k.dim(0) != v.dim(0)) op_error("attention", "K/V row counts differ");
  if (k.dim(0) == 0) op_error("attention", "no keys");
  Tensor<T> logits = matmul(q, transpose(k));
  logits = scale(logits, T(1) / std::sqrt(T(q.dim(1))));
  return matmul(softmax_rows(logits), v);
}

// mean binary cross-entropy on logits; stable via softplus(|z|) form
template <typename T>
Tensor<T> bce_with_logits_mean(const Tensor<T>& logits, const Tensor<T>& target) {
  check_same_shape("bce_with_logits", logits, target);
  const auto& zv = logits.data();
  const auto& yv = target.data();
  T acc = 0;
  for (size_t i = 0; i < zv.size(); ++i) {
    T z = zv[i];
    acc += std::max(z, T(0)) - z * yv[i] + std::log1p(std::exp(-std::abs(z)));
  }
  const T inv = T(1) / T(zv.size());
  return make_op<T>("bce_with_logits", {1}, {acc * inv}, {logits, target},
                    [logits, target, inv](TensorNode<T>& o) {
    const auto& zv = logits.data();
    const auto& yv = target.data();
    if (logits.requires_grad()) {
      auto& gz = Tensor<T>(logits).grad();
      for (size_t i = 0; i < gz.size(); ++i) {
        T s = T(1) / (T(1) + std::exp(-zv[i]));
        gz[i] += o.grad[0] * inv * (s - yv[i]);
      }
    }
    if (target.requires_grad()) {
      auto& gy = Tensor<T>(target).grad();
      for (size_t i = 0; i < gy.size(); ++i) gy[i] -= o.grad[0] * inv * zv[i];
    }
  });
}

}  // namespace mafn
