#pragma once

#include <algorithm>
#include <cmath>

#include "mafn/tensor.hpp"

// Primitives over [C,H,W] feature maps and convolution kernels.

namespace mafn {

// 2-D convolution, zero padding outside the support. Kernel extent must be
// odd; pad = (k-1)/2 makes it shape-preserving at stride 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride, int padding) {
  if (x.rank() != 3) op_error("conv2d", "input must be [C,H,W], got " + shape_str(x.shape()));
  if (w.rank() != 4 || w.dim(2) != w.dim(3))
    op_error("conv2d", "kernel must be [Co,Ci,k,k], got " + shape_str(w.shape()));
  if (w.dim(1) != x.dim(0))
    op_error("conv2d", "channel mismatch: input " + shape_str(x.shape()) + " vs kernel " +
                           shape_str(w.shape()));
  const int k = w.dim(2);
  if (k % 2 == 0) op_error("conv2d", "kernel extent must be odd, got " + std::to_string(k));
  if (stride < 1) op_error("conv2d", "stride must be >= 1");
  if (padding < 0) op_error("conv2d", "padding must be >= 0");
  const int ci = x.dim(0), h = x.dim(1), ww = x.dim(2), co = w.dim(0);
  const int oh = (h + 2 * padding - k) / stride + 1;
  const int ow = (ww + 2 * padding - k) / stride + 1;
  if (oh < 1 || ow < 1) op_error("conv2d", "kernel larger than padded input");

  std::vector<T> out(size_t(co) * oh * ow, T(0));
  const auto& xv = x.data();
  const auto& wv = w.data();
  for (int c = 0; c < co; ++c) {
    for (int i = 0; i < ci; ++i) {
      const T* xc = xv.data() + size_t(i) * h * ww;
      const T* wc = wv.data() + (size_t(c) * ci + i) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const T wval = wc[size_t(ky) * k + kx];
          if (wval == T(0)) continue;
          if (stride == 1) {
            const int oy0 = std::max(0, padding - ky);
            const int oy1 = std::min(oh, h + padding - ky);
            const int ox0 = std::max(0, padding - kx);
            const int ox1 = std::min(ow, ww + padding - kx);
            for (int y = oy0; y < oy1; ++y) {
              const T* xrow = xc + size_t(y - padding + ky) * ww + (ox0 - padding + kx);
              T* orow = out.data() + (size_t(c) * oh + y) * ow + ox0;
              for (int xx = 0; xx < ox1 - ox0; ++xx) orow[xx] += wval * xrow[xx];
            }
          } else {
            for (int y = 0; y < oh; ++y) {
              const int iy = y * stride - padding + ky;
              if (iy < 0 || iy >= h) continue;
              T* orow = out.data() + (size_t(c) * oh + y) * ow;
              const T* xrow = xc + size_t(iy) * ww;
              for (int xo = 0; xo < ow; ++xo) {
                const int ix = xo * stride - padding + kx;
                if (ix >= 0 && ix < ww) orow[xo] += wval * xrow[ix];
              }
            }
          }
        }
      }
    }
  }
  return make_op<T>("conv2d", {co, oh, ow}, std::move(out), {x, w},
                    [x, w, stride, padding, k, ci, h, ww, co, oh, ow](TensorNode<T>& o) {
    const auto& xv = x.data();
    const auto& wv = w.data();
    const bool need_dx = x.requires_grad();
    const bool need_dw = w.requires_grad();
    auto* gx = need_dx ? Tensor<T>(x).grad().data() : nullptr;
    auto* gw = need_dw ? Tensor<T>(w).grad().data() : nullptr;
    for (int c = 0; c < co; ++c) {
      for (int i = 0; i < ci; ++i) {
        const T* xc = xv.data() + size_t(i) * h * ww;
        T* gxc = need_dx ? gx + size_t(i) * h * ww : nullptr;
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const size_t widx = (size_t(c) * ci + i) * k * k + size_t(ky) * k + kx;
            const T wval = wv[widx];
            T wacc = 0;
            for (int y = 0; y < oh; ++y) {
              const int iy = y * stride - padding + ky;
              if (iy < 0 || iy >= h) continue;
              const T* grow = o.grad.data() + (size_t(c) * oh + y) * ow;
              const T* xrow = xc + size_t(iy) * ww;
              T* gxrow = need_dx ? gxc + size_t(iy) * ww : nullptr;
              if (stride == 1) {
                const int ox0 = std::max(0, padding - kx);
                const int ox1 = std::min(ow, ww + padding - kx);
                const int shift = kx - padding;
                if (need_dw)
                  for (int xo = ox0; xo < ox1; ++xo) wacc += grow[xo] * xrow[xo + shift];
                if (need_dx)
                  for (int xo = ox0; xo < ox1; ++xo) gxrow[xo + shift] += wval * grow[xo];
              } else {
                for (int xo = 0; xo < ow; ++xo) {
                  const int ix = xo * stride - padding + kx;
                  if (ix < 0 || ix >= ww) continue;
                  if (need_dw) wacc += grow[xo] * xrow[ix];
                  if (need_dx) gxrow[ix] += wval * grow[xo];
                }
              }
            }
            if (need_dw) gw[widx] += wacc;
          }
        }
      }
    }
  });
}

// depthwise conv: one [k,k] filter per channel
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride, int padding) {
  if (x.rank() != 3) op_error("depthwise_conv2d", "input must be [C,H,W]");
  if (w.rank() != 3 || w.dim(1) != w.dim(2)) op_error("depthwise_conv2d", "kernel must be [C,k,k]");
  if (w.dim(0) != x.dim(0))
    op_error("depthwise_conv2d", "channel mismatch: " + shape_str(x.shape()) + " vs " +
                                     shape_str(w.shape()));
  const int k = w.dim(1);
  if (k % 2 == 0) op_error("depthwise_conv2d", "kernel extent must be odd");
  const int c = x.dim(0), h = x.dim(1), ww = x.dim(2);
  const int oh = (h + 2 * padding - k) / stride + 1;
  const int ow = (ww + 2 * padding - k) / stride + 1;
  if (oh < 1 || ow < 1) op_error("depthwise_conv2d", "kernel larger than padded input");

  std::vector<T> out(size_t(c) * oh * ow, T(0));
  const auto& xv = x.data();
  const auto& wv = w.data();
  for (int i = 0; i < c; ++i) {
    const T* xc = xv.data() + size_t(i) * h * ww;
    const T* wc = wv.data() + size_t(i) * k * k;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T wval = wc[size_t(ky) * k + kx];
        for (int y = 0; y < oh; ++y) {
          const int iy = y * stride - padding + ky;
          if (iy < 0 || iy >= h) continue;
          T* orow = out.data() + (size_t(i) * oh + y) * ow;
          const T* xrow = xc + size_t(iy) * ww;
          for (int xo = 0; xo < ow; ++xo) {
            const int ix = xo * stride - padding + kx;
            if (ix >= 0 && ix < ww) orow[xo] += wval * xrow[ix];
          }
        }
      }
  }
  return make_op<T>("depthwise_conv2d", {c, oh, ow}, std::move(out), {x, w},
                    [x, w, stride, padding, k, c, h, ww, oh, ow](TensorNode<T>& o) {
    const auto& xv = x.data();
    const auto& wv = w.data();
    for (int i = 0; i < c; ++i) {
      const T* xc = xv.data() + size_t(i) * h * ww;
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const size_t widx = size_t(i) * k * k + size_t(ky) * k + kx;
          T wacc = 0;
          for (int y = 0; y < oh; ++y) {
            const int iy = y * stride - padding + ky;
            if (iy < 0 || iy >= h) continue;
            const T* grow = o.grad.data() + (size_t(i) * oh + y) * ow;
            for (int xo = 0; xo < ow; ++xo) {
              const int ix = xo * stride - padding + kx;
              if (ix < 0 || ix >= ww) continue;
              wacc += grow[xo] * xc[size_t(iy) * ww + ix];
              if (x.requires_grad())
                Tensor<T>(x).grad()[size_t(i) * h * ww + size_t(iy) * ww + ix] +=
                    wv[widx] * grow[xo];
            }
          }
          if (w.requires_grad()) Tensor<T>(w).grad()[widx] += wacc;
        }
    }
  });
}

// [C,H,W] + per-channel bias [C]
template <typename T>
Tensor<T> add_channel_vec(const Tensor<T>& x, const Tensor<T>& b) {
  if (x.rank() != 3 || b.rank() != 1 || b.dim(0) != x.dim(0))
    op_error("add_channel_vec", "expects [C,H,W] + [C]");
  const int c = x.dim(0);
  const size_t hw = size_t(x.dim(1)) * x.dim(2);
  std::vector<T> out(x.data());
  const auto& bv = b.data();
  for (int i = 0; i < c; ++i)
    for (size_t j = 0; j < hw; ++j) out[size_t(i) * hw + j] += bv[size_t(i)];
  return make_op<T>("add_channel_vec", x.shape(), std::move(out), {x, b},
                    [x, b, c, hw](TensorNode<T>& o) {
    if (x.requires_grad()) {
      auto& gx = Tensor<T>(x).grad();
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i];
    }
    if (b.requires_grad()) {
      auto& gb = Tensor<T>(b).grad();
      for (int i = 0; i < c; ++i) {
        T acc = 0;
        for (size_t j = 0; j < hw; ++j) acc += o.grad[size_t(i) * hw + j];
        gb[size_t(i)] += acc;
      }
    }
  });
}

// [C,H,W] scaled by per-channel factors [C]
template <typename T>
Tensor<T> mul_channel_vec(const Tensor<T>& x, const Tensor<T>& s) {
  if (x.rank() != 3 || s.rank() != 1 || s.dim(0) != x.dim(0))
    op_error("mul_channel_vec", "expects [C,H,W] with [C] factors");
  const int c = x.dim(0);
  const size_t hw = size_t(x.dim(1)) * x.dim(2);
  std::vector<T> out(x.data());
  const auto& sv = s.data();
  for (int i = 0; i < c; ++i)
    for (size_t j = 0; j < hw; ++j) out[size_t(i) * hw + j] *= sv[size_t(i)];
  return make_op<T>("mul_channel_vec", x.shape(), std::move(out), {x, s},
                    [x, s, c, hw](TensorNode<T>& o) {
    const auto& sv = s.data();
    const auto& xv = x.data();
    if (x.requires_grad()) {
      auto& gx = Tensor<T>(x).grad();
      for (int i = 0; i < c; ++i)
        for (size_t j = 0; j < hw; ++j)
          gx[size_t(i) * hw + j] += o.grad[size_t(i) * hw + j] * sv[size_t(i)];
    }
    if (s.requires_grad()) {
      auto& gs = Tensor<T>(s).grad();
      for (int i = 0; i < c; ++i) {
        T acc = 0;
        for (size_t j = 0; j < hw; ++j)
          acc += o.grad[size_t(i) * hw + j] * xv[size_t(i) * hw + j];
        gs[size_t(i)] += acc;
      }
    }
  });
}

// [C,H,W] scaled position-wise by a [1,H,W] map
template <typename T>
Tensor<T> mul_spatial_map(const Tensor<T>& x, const Tensor<T>& m) {
  if (x.rank() != 3 || m.rank() != 3 || m.dim(0) != 1 || m.dim(1) != x.dim(1) ||
      m.dim(2) != x.dim(2))
    op_error("mul_spatial_map", "expects [C,H,W] with [1,H,W] map");
  const int c = x.dim(0);
  const size_t hw = size_t(x.dim(1)) * x.dim(2);
  std::vector<T> out(x.data());
  const auto& mv = m.data();
  for (int i = 0; i < c; ++i)
    for (size_t j = 0; j < hw; ++j) out[size_t(i) * hw + j] *= mv[j];
  return make_op<T>("mul_spatial_map", x.shape(), std::move(out), {x, m},
                    [x, m, c, hw](TensorNode<T>& o) {
    const auto& mv = m.data();
    const auto& xv = x.data();
    if (x.requires_grad()) {
      auto& gx = Tensor<T>(x).grad();
      for (int i = 0; i < c; ++i)
        for (size_t j = 0; j < hw; ++j) gx[size_t(i) * hw + j] += o.grad[size_t(i) * hw + j] * mv[j];
    }
    if (m.requires_grad()) {
      auto& gm = Tensor<T>(m).grad();
      for (int i = 0; i < c; ++i)
        for (size_t j = 0; j < hw; ++j)
          gm[j] += o.grad[size_t(i) * hw + j] * xv[size_t(i) * hw + j];
    }
  });
}

// channel mean: [C,H,W] -> [1,H,W]
template <typename T>
Tensor<T> mean_channels(const Tensor<T>& x) {
  if (x.rank() != 3) op_error("mean_channels", "expects [C,H,W]");
  const int c = x.dim(0);
  const size_t hw = size_t(x.dim(1)) * x.dim(2);
  std::vector<T> out(hw, T(0));
  const auto& xv = x.data();
  for (int i = 0; i < c; ++i)
    for (size_t j = 0; j < hw; ++j) out[j] += xv[size_t(i) * hw + j];
  const T inv = T(1) / T(c);
  for (auto& v : out) v *= inv;
  return make_op<T>("mean_channels", {1, x.dim(1), x.dim(2)}, std::move(out), {x},
                    [x, c, hw, inv](TensorNode<T>& o) {
    auto& gx = Tensor<T>(x).grad();
    for (int i = 0; i < c; ++i)
      for (size_t j = 0; j < hw; ++j) gx[size_t(i) * hw + j] += o.grad[j] * inv;
  });
}

// spatial mean: [C,H,W] -> [C]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.rank() != 3) op_error("global_avg_pool", "expects [C,H,W]");
  const int c = x.dim(0);
  const size_t hw = size_t(x.dim(1)) * x.dim(2);
  std::vector<T> out(size_t(c), T(0));
  const auto& xv = x.data();
  for (int i = 0; i < c; ++i) {
    T acc = 0;
    for (size_t j = 0; j < hw; ++j) acc += xv[size_t(i) * hw + j];
    out[size_t(i)] = acc / T(hw);
  }
  return make_op<T>("global_avg_pool", {c}, std::move(out), {x}, [x, c, hw](TensorNode<T>& o) {
    auto& gx = Tensor<T>(x).grad();
    const T inv = T(1) / T(hw);
    for (int i = 0; i < c; ++i)
      for (size_t j = 0; j < hw; ++j) gx[size_t(i) * hw + j] += o.grad[size_t(i)] * inv;
  });
}

// per-channel normalization over spatial positions with learned scale/shift
template <typename T>
Tensor<T> channel_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                         T eps = T(1e-5)) {
  if (x.rank() != 3 || gamma.rank() != 1 || beta.rank() != 1 || gamma.dim(0) != x.dim(0) ||
      beta.dim(0) != x.dim(0))
    op_error("channel_norm2d", "expects [C,H,W] with [C] scale/shift");
  const int c = x.dim(0);
  const size_t hw = size_t(x.dim(1)) * x.dim(2);
  std::vector<T> out(size_t(c) * hw);
  std::vector<T> xhat(size_t(c) * hw);
  std::vector<T> inv_std(size_t(c), T(0));
  const auto& xv = x.data();
  const auto& gv = gamma.data();
  const auto& bv = beta.data();
  for (int i = 0; i < c; ++i) {
    const T* row = xv.data() + size_t(i) * hw;
    T mean = 0;
    for (size_t j = 0; j < hw; ++j) mean += row[j];
    mean /= T(hw);
    T var = 0;
    for (size_t j = 0; j < hw; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= T(hw);
    const T inv = T(1) / std::sqrt(var + eps);
    inv_std[size_t(i)] = inv;
    for (size_t j = 0; j < hw; ++j) {
      T xh = (row[j] - mean) * inv;
      xhat[size_t(i) * hw + j] = xh;
      out[size_t(i) * hw + j] = gv[size_t(i)] * xh + bv[size_t(i)];
    }
  }
  return make_op<T>("channel_norm2d", x.shape(), std::move(out), {x, gamma, beta},
                    [x, gamma, beta, c, hw, xhat = std::move(xhat),
                     inv_std = std::move(inv_std)](TensorNode<T>& o) {
    const auto& gv = gamma.data();
    for (int i = 0; i < c; ++i) {
      const T* g = o.grad.data() + size_t(i) * hw;
      const T* xh = xhat.data() + size_t(i) * hw;
      if (gamma.requires_grad()) {
        T acc = 0;
        for (size_t j = 0; j < hw; ++j) acc += g[j] * xh[j];
        Tensor<T>(gamma).grad()[size_t(i)] += acc;
      }
      if (beta.requires_grad()) {
        T acc = 0;
        for (size_t j = 0; j < hw; ++j) acc += g[j];
        Tensor<T>(beta).grad()[size_t(i)] += acc;
      }
      if (x.requires_grad()) {
        auto& gx = Tensor<T>(x).grad();
        T m1 = 0, m2 = 0;
        for (size_t j = 0; j < hw; ++j) {
          m1 += g[j];
          m2 += g[j] * xh[j];
        }
        m1 = m1 * gv[size_t(i)] / T(hw);
        m2 = m2 * gv[size_t(i)] / T(hw);
        for (size_t j = 0; j < hw; ++j)
          gx[size_t(i) * hw + j] +=
              inv_std[size_t(i)] * (g[j] * gv[size_t(i)] - m1 - xh[j] * m2);
      }
    }
  });
}

// zero padding of the spatial extent
template <typename T>
Tensor<T> pad2d(const Tensor<T>& x, int top, int bottom, int left, int right) {
  if (x.rank() != 3) op_error("pad2d", "expects [C,H,W]");
  if (top < 0 || bottom < 0 || left < 0 || right < 0) op_error("pad2d", "negative pad");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int nh = h + top + bottom, nw = w + left + right;
  std::vector<T> out(size_t(c) * nh * nw, T(0));
  const auto& xv = x.data();
  for (int i = 0; i < c; ++i)
    for (int y = 0; y < h; ++y)
      std::copy(xv.begin() + (size_t(i) * h + y) * w, xv.begin() + (size_t(i) * h + y + 1) * w,
                out.begin() + (size_t(i) * nh + y + top) * nw + left);
  return make_op<T>("pad2d", {c, nh, nw}, std::move(out), {x},
                    [x, c, h, w, top, left, nh, nw](TensorNode<T>& o) {
    auto& gx = Tensor<T>(x).grad();
    for (int i = 0; i < c; ++i)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          gx[(size_t(i) * h + y) * w + xx] +=
              o.grad[(size_t(i) * nh + y + top) * nw + left + xx];
  });
}

// spatial window [y0, y0+h) x [x0, x0+w)
template <typename T>
Tensor<T> crop2d(const Tensor<T>& x, int y0, int x0, int h, int w) {
  if (x.rank() != 3) op_error("crop2d", "expects [C,H,W]");
  if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > x.dim(1) || x0 + w > x.dim(2))
    op_error("crop2d", "window outside input");
  const int c = x.dim(0), ih = x.dim(1), iw = x.dim(2);
  std::vector<T> out(size_t(c) * h * w);
  const auto& xv = x.data();
  for (int i = 0; i < c; ++i)
    for (int y = 0; y < h; ++y)
      std::copy(xv.begin() + (size_t(i) * ih + y0 + y) * iw + x0,
                xv.begin() + (size_t(i) * ih + y0 + y) * iw + x0 + w,
                out.begin() + (size_t(i) * h + y) * w);
  return make_op<T>("crop2d", {c, h, w}, std::move(out), {x},
                    [x, c, ih, iw, y0, x0, h, w](TensorNode<T>& o) {
    auto& gx = Tensor<T>(x).grad();
    for (int i = 0; i < c; ++i)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          gx[(size_t(i) * ih + y0 + y) * iw + x0 + xx] += o.grad[(size_t(i) * h + y) * w + xx];
  });
}

// pixel-unshuffle: [C,H,W] -> [C*b*b, H/b, W/b]; powers patch embedding and
// patch merging when followed by a 1x1 conv
template <typename T>
Tensor<T> space_to_channel(const Tensor<T>& x, int block) {
  if (x.rank() != 3) op_error("space_to_channel", "expects [C,H,W]");
  if (block < 1 || x.dim(1) % block != 0 || x.dim(2) % block != 0)
    op_error("space_to_channel", "spatial dims " + shape_str(x.shape()) +
                                     " not divisible by block " + std::to_string(block));
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int oh = h / block, ow = w / block;
  std::vector<T> out(size_t(c) * h * w);
  const auto& xv = x.data();
  for (int i = 0; i < c; ++i)
    for (int dy = 0; dy < block; ++dy)
      for (int dx = 0; dx < block; ++dx) {
        const size_t oc = (size_t(i) * block + dy) * block + dx;
        for (int y = 0; y < oh; ++y)
          for (int xx = 0; xx < ow; ++xx)
            out[(oc * oh + y) * ow + xx] =
                xv[(size_t(i) * h + size_t(y) * block + dy) * w + size_t(xx) * block + dx];
      }
  return make_op<T>("space_to_channel", {c * block * block, oh, ow}, std::move(out), {x},
                    [x, c, h, w, block, oh, ow](TensorNode<T>& o) {
    auto& gx = Tensor<T>(x).grad();
    for (int i = 0; i < c; ++i)
      for (int dy = 0; dy < block; ++dy)
        for (int dx = 0; dx < block; ++dx) {
          const size_t oc = (size_t(i) * block + dy) * block + dx;
          for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx)
              gx[(size_t(i) * h + size_t(y) * block + dy) * w + size_t(xx) * block + dx] +=
                  o.grad[(oc * oh + y) * ow + xx];
        }
  });
}

// Bilinear resize with half-pixel centers (no align-corners); source
// coordinates are clamped at the borders, so constants are preserved and an
// identity-size resize is exact.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w) {
  if (x.rank() != 3) op_error("bilinear_resize", "expects [C,H,W]");
  if (out_h < 1 || out_w < 1) op_error("bilinear_resize", "output size must be positive");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);

  struct Tap {
    int i0, i1;
    T f;  // weight of i1
  };
  auto make_taps = [](int in, int out) {
    std::vector<Tap> taps(static_cast<size_t>(out));
    const double s = double(in) / double(out);
    for (int o = 0; o < out; ++o) {
      double src = (o + 0.5) * s - 0.5;
      if (src < 0) src = 0;
      if (src > in - 1) src = in - 1;
      int i0 = int(src);
      if (i0 > in - 1) i0 = in - 1;
      int i1 = std::min(i0 + 1, in - 1);
      taps[size_t(o)] = {i0, i1, T(src - i0)};
    }
    return taps;
  };
  const auto ty = make_taps(h, out_h);
  const auto tx = make_taps(w, out_w);

  std::vector<T> out(size_t(c) * out_h * out_w);
  const auto& xv = x.data();
  for (int i = 0; i < c; ++i) {
    const T* xc = xv.data() + size_t(i) * h * w;
    for (int y = 0; y < out_h; ++y) {
      const Tap& a = ty[size_t(y)];
      for (int xo = 0; xo < out_w; ++xo) {
        const Tap& b = tx[size_t(xo)];
        const T v00 = xc[size_t(a.i0) * w + b.i0], v01 = xc[size_t(a.i0) * w + b.i1];
        const T v10 = xc[size_t(a.i1) * w + b.i0], v11 = xc[size_t(a.i1) * w + b.i1];
        out[(size_t(i) * out_h + y) * out_w + xo] =
            (T(1) - a.f) * ((T(1) - b.f) * v00 + b.f * v01) +
            a.f * ((T(1) - b.f) * v10 + b.f * v11);
      }
    }
  }
  return make_op<T>("bilinear_resize", {c, out_h, out_w}, std::move(out), {x},
                    [x, c, h, w, out_h, out_w, ty, tx](TensorNode<T>& o) {
    auto& gx = Tensor<T>(x).grad();
    for (int i = 0; i < c; ++i) {
      T* gc = gx.data() + size_t(i) * h * w;
      for (int y = 0; y < out_h; ++y) {
        const auto& a = ty[size_t(y)];
        for (int xo = 0; xo < out_w; ++xo) {
          const auto& b = tx[size_t(xo)];
          const T g = o.grad[(size_t(i) * out_h + y) * out_w + xo];
          gc[size_t(a.i0) * w + b.i0] += (T(1) - a.f) * (T(1) - b.f) * g;
          gc[size_t(a.i0) * w + b.i1] += (T(1) - a.f) * b.f * g;
          gc[size_t(a.i1) * w + b.i0] += a.f * (T(1) - b.f) * g;
          gc[size_t(a.i1) * w + b.i1] += a.f * b.f * g;
        }
      }
    }
  });
}

// Channel-averaged similarity between one map and spatially shifted positions
// of another. Channel o enumerates offsets (dx,dy) row-major from (-d,-d) to
// (d,d); dx shifts the first spatial index, dy the second. Out-of-range
// shifted positions contribute zero.
template <typename T>
Tensor<T> correlation_volume(const Tensor<T>& tv, const Tensor<T>& tl, int d) {
  check_same_shape("correlation_volume", tv, tl);
  if (tv.rank() != 3) op_error("correlation_volume", "expects [C,H,W]");
  if (d < 0) op_error("correlation_volume", "negative displacement");
  const int c = tv.dim(0), h = tv.dim(1), w = tv.dim(2);
  const int side = 2 * d + 1, no = side * side;
  const T inv = T(1) / T(c);
  std::vector<T> out(size_t(no) * h * w, T(0));
  const auto& av = tv.data();
  const auto& bv = tl.data();
  for (int o = 0; o < no; ++o) {
    const int dx = o / side - d, dy = o % side - d;
    for (int y = 0; y < h; ++y) {
      const int sy = y + dx;
      if (sy < 0 || sy >= h) continue;
      for (int xx = 0; xx < w; ++xx) {
        const int sx = xx + dy;
        if (sx < 0 || sx >= w) continue;
        T acc = 0;
        for (int i = 0; i < c; ++i)
          acc += av[(size_t(i) * h + y) * w + xx] * bv[(size_t(i) * h + sy) * w + sx];
        out[(size_t(o) * h + y) * w + xx] = acc * inv;
      }
    }
  }
  return make_op<T>("correlation_volume", {no, h, w}, std::move(out), {tv, tl},
                    [tv, tl, d, c, h, w, side, no, inv](TensorNode<T>& o) {
    const auto& av = tv.data();
    const auto& bv = tl.data();
    for (int oo = 0; oo < no; ++oo) {
      const int dx = oo / side - d, dy = oo % side - d;
      for (int y = 0; y < h; ++y) {
        const int sy = y + dx;
        if (sy < 0 || sy >= h) continue;
        for (int xx = 0; xx < w; ++xx) {
          const int sx = xx + dy;
          if (sx < 0 || sx >= w) continue;
          const T g = o.grad[(size_t(oo) * h + y) * w + xx] * inv;
          if (g == T(0)) continue;
          if (tv.requires_grad()) {
            auto& ga = Tensor<T>(tv).grad();
            for (int i = 0; i < c; ++i)
              ga[(size_t(i) * h + y) * w + xx] += g * bv[(size_t(i) * h + sy) * w + sx];
          }
          if (tl.requires_grad()) {
            auto& gb = Tensor<T>(tl).grad();
            for (int i = 0; i < c; ++i)
              gb[(size_t(i) * h + sy) * w + sx] += g * av[(size_t(i) * h + y) * w + xx];
          }
        }
      }
    }
  });
}

// Rotate a [Co,Ci,k,k] kernel about its center by theta (a [1] tensor),
// resampling with bilinear interpolation; coordinates outside the support
// read as zero. Differentiable in both the kernel and the angle.
template <typename T>
Tensor<T> rotate_kernel(const Tensor<T>& w, const Tensor<T>& theta) {
  if (w.rank() != 4 || w.dim(2) != w.dim(3)) op_error("rotate_kernel", "kernel must be [Co,Ci,k,k]");
  if (theta.size() != 1) op_error("rotate_kernel", "theta must be a single-element tensor");
  const int co = w.dim(0), ci = w.dim(1), k = w.dim(2);
  const T th = theta.data()[0];
  const T c = std::cos(th), s = std::sin(th);
  const T ctr = T(k - 1) / T(2);

  // per-cell source lattice corners and weights, shared by all filters
  struct Cell {
    int y0, x0;
    T fy, fx;
    T dsy, dsx;  // d(src)/d(theta)
  };
  std::vector<Cell> cells(size_t(k) * k);
  for (int r = 0; r < k; ++r)
    for (int col = 0; col < k; ++col) {
      const T dy = T(r) - ctr, dx = T(col) - ctr;
      const T sy = c * dy + s * dx + ctr;
      const T sx = -s * dy + c * dx + ctr;
      Cell& cell = cells[size_t(r) * k + col];
      cell.y0 = int(std::floor(sy));
      cell.x0 = int(std::floor(sx));
      cell.fy = sy - T(cell.y0);
      cell.fx = sx - T(cell.x0);
      cell.dsy = -s * dy + c * dx;   // = sx - ctr
      cell.dsx = -c * dy - s * dx;   // = -(sy - ctr)
    }

  auto in_range = [k](int y, int x) { return y >= 0 && y < k && x >= 0 && x < k; };
  std::vector<T> out(w.data().size(), T(0));
  const auto& wv = w.data();
  for (int f = 0; f < co * ci; ++f) {
    const T* wk = wv.data() + size_t(f) * k * k;
    T* ok = out.data() + size_t(f) * k * k;
    for (int idx = 0; idx < k * k; ++idx) {
      const Cell& cl = cells[size_t(idx)];
      T v = 0;
      for (int ry = 0; ry < 2; ++ry)
        for (int rx = 0; rx < 2; ++rx) {
          const int y = cl.y0 + ry, x = cl.x0 + rx;
          if (!in_range(y, x)) continue;
          const T wt = (ry ? cl.fy : T(1) - cl.fy) * (rx ? cl.fx : T(1) - cl.fx);
          v += wt * wk[size_t(y) * k + x];
        }
      ok[size_t(idx)] = v;
    }
  }
  return make_op<T>("rotate_kernel", w.shape(), std::move(out), {w, theta},
                    [w, theta, co, ci, k, cells = std::move(cells),
                     in_range](TensorNode<T>& o) {
    const auto& wv = w.data();
    T dtheta = 0;
    for (int f = 0; f < co * ci; ++f) {
      const T* wk = wv.data() + size_t(f) * k * k;
      const T* gk = o.grad.data() + size_t(f) * k * k;
      for (int idx = 0; idx < k * k; ++idx) {
        const Cell& cl = cells[size_t(idx)];
        const T g = gk[size_t(idx)];
        if (g == T(0)) continue;
        // corner values (zero outside support)
        T v[2][2] = {{0, 0}, {0, 0}};
        for (int ry = 0; ry < 2; ++ry)
          for (int rx = 0; rx < 2; ++rx) {
            const int y = cl.y0 + ry, x = cl.x0 + rx;
            if (in_range(y, x)) v[ry][rx] = wk[size_t(y) * k + x];
          }
        if (w.requires_grad()) {
          auto& gw = Tensor<T>(w).grad();
          for (int ry = 0; ry < 2; ++ry)
            for (int rx = 0; rx < 2; ++rx) {
              const int y = cl.y0 + ry, x = cl.x0 + rx;
              if (!in_range(y, x)) continue;
              const T wt = (ry ? cl.fy : T(1) - cl.fy) * (rx ? cl.fx : T(1) - cl.fx);
              gw[size_t(f) * k * k + size_t(y) * k + x] += g * wt;
            }
        }
        if (theta.requires_grad()) {
          const T dv_dsy = (T(1) - cl.fx) * (v[1][0] - v[0][0]) + cl.fx * (v[1][1] - v[0][1]);
          const T dv_dsx = (T(1) - cl.fy) * (v[0][1] - v[0][0]) + cl.fy * (v[1][1] - v[1][0]);
          dtheta += g * (dv_dsy * cl.dsy + dv_dsx * cl.dsx);
        }
      }
    }
    if (theta.requires_grad()) Tensor<T>(theta).grad()[0] += dtheta;
  });
}

}  // namespace mafn
