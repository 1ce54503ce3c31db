#pragma once

#include <cmath>
#include <vector>

#include "mafn/cfm.hpp"
#include "mafn/msrc.hpp"

// Literal loop-level transcriptions of the architecture equations, written
// directly against raw arrays. They are the independent oracles the
// verification suite compares the graph implementations against, so nothing
// here may call back into the op library.

namespace mafn::transcription {

// stride-1 convolution with bias, zero padding
inline std::vector<double> nconv(const std::vector<double>& x, int ci, int h, int w,
                                 const std::vector<double>& ker, int co, int k, int pad,
                                 const std::vector<double>& bias) {
  const int oh = h + 2 * pad - k + 1, ow = w + 2 * pad - k + 1;
  std::vector<double> out(size_t(co) * oh * ow, 0.0);
  for (int c = 0; c < co; ++c)
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx) {
        double acc = bias.empty() ? 0.0 : bias[size_t(c)];
        for (int i = 0; i < ci; ++i)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = y - pad + ky, ix = xx - pad + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += ker[((size_t(c) * ci + i) * k + ky) * k + kx] *
                     x[(size_t(i) * h + iy) * w + ix];
            }
        out[(size_t(c) * oh + y) * ow + xx] = acc;
      }
  return out;
}

inline std::vector<double> nmatmul(const std::vector<double>& a, int n, int k,
                                   const std::vector<double>& b, int m) {
  std::vector<double> out(size_t(n) * m, 0.0);
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < k; ++p)
      for (int j = 0; j < m; ++j)
        out[size_t(i) * m + j] += a[size_t(i) * k + p] * b[size_t(p) * m + j];
  return out;
}

inline std::vector<double> nsoftmax_row(std::vector<double> v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double z = 0;
  for (auto& x : v) {
    x = std::exp(x - mx);
    z += x;
  }
  for (auto& x : v) x /= z;
  return v;
}

inline std::vector<double> nattention(const std::vector<double>& q, int n, int d,
                                      const std::vector<double>& k, int m,
                                      const std::vector<double>& v, int c) {
  std::vector<double> out(size_t(n) * c, 0.0);
  for (int i = 0; i < n; ++i) {
    std::vector<double> logits(size_t(m), 0.0);
    for (int j = 0; j < m; ++j) {
      double acc = 0;
      for (int p = 0; p < d; ++p) acc += q[size_t(i) * d + p] * k[size_t(j) * d + p];
      logits[size_t(j)] = acc / std::sqrt(double(d));
    }
    auto a = nsoftmax_row(logits);
    for (int j = 0; j < m; ++j)
      for (int p = 0; p < c; ++p) out[size_t(i) * c + p] += a[size_t(j)] * v[size_t(j) * c + p];
  }
  return out;
}

// G_v = sig(sum_j (1/C) sum_c k_j * V_e) (x) V_e
inline std::vector<double> eq6_visual_integration(const CfmLayer<double>& L,
                                                  const std::vector<double>& ve, int c, int h,
                                                  int w) {
  std::vector<double> gate(size_t(h) * w, 0.0);
  for (const auto& conv : L.vi_convs) {
    const int k = conv.w.dim(2);
    auto r = nconv(ve, c, h, w, conv.w.data(), c, k, (k - 1) / 2, conv.b.data());
    for (int y = 0; y < h * w; ++y) {
      double mean = 0;
      for (int i = 0; i < c; ++i) mean += r[size_t(i) * h * w + y];
      gate[size_t(y)] += mean / c;
    }
  }
  std::vector<double> out(size_t(c) * h * w);
  for (int y = 0; y < h * w; ++y) gate[size_t(y)] = 1.0 / (1.0 + std::exp(-gate[size_t(y)]));
  for (int i = 0; i < c; ++i)
    for (int y = 0; y < h * w; ++y) out[size_t(i) * h * w + y] = ve[size_t(i) * h * w + y] * gate[size_t(y)];
  return out;
}

// Eqs 7 / 9: x (x) tanh(W2 relu(W1 x))
inline std::vector<double> gate_naive(const GateNet<double>& g, const std::vector<double>& x,
                                      int c, int h, int w) {
  auto h1 = nconv(x, c, h, w, g.fc1.w.data(), c, 1, 0, g.fc1.b.data());
  for (auto& v : h1) v = std::max(v, 0.0);
  auto h2 = nconv(h1, c, h, w, g.fc2.w.data(), c, 1, 0, g.fc2.b.data());
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(h2[i]) * x[i];
  return out;
}

// Eq 8: Proj(Att(V_e W_eq, F_t W_lk, F_t W_lv) (x) V_e W_e)
inline std::vector<double> eq8_multimodal(const CfmLayer<double>& L,
                                          const std::vector<double>& ve, int c, int h, int w,
                                          const std::vector<double>& ft, int ct, int m) {
  const int hw = h * w;
  std::vector<double> tokens(size_t(hw) * c);
  for (int i = 0; i < c; ++i)
    for (int y = 0; y < hw; ++y) tokens[size_t(y) * c + i] = ve[size_t(i) * hw + y];
  std::vector<double> text_rows(size_t(m) * ct);
  for (int i = 0; i < ct; ++i)
    for (int j = 0; j < m; ++j) text_rows[size_t(j) * ct + i] = ft[size_t(i) * m + j];
  auto q = nmatmul(tokens, hw, c, L.w_eq.data(), c);
  auto k = nmatmul(text_rows, m, ct, L.w_lk.data(), c);
  auto v = nmatmul(text_rows, m, ct, L.w_lv.data(), c);
  auto att = nattention(q, hw, c, k, m, v, c);
  auto we = nmatmul(tokens, hw, c, L.w_e.data(), c);
  for (size_t i = 0; i < att.size(); ++i) att[i] *= we[i];
  auto proj = nmatmul(att, hw, c, L.proj.w.data(), c);
  std::vector<double> out(size_t(c) * hw);
  for (int y = 0; y < hw; ++y)
    for (int i = 0; i < c; ++i)
      out[size_t(i) * hw + y] = proj[size_t(y) * c + i] + L.proj.b.data()[size_t(i)];
  return out;
}

// Eq 10
inline std::vector<double> eq10_correlation(const std::vector<double>& tv,
                                            const std::vector<double>& tl, int c, int h, int w,
                                            int d) {
  const int side = 2 * d + 1;
  std::vector<double> out(size_t(side) * side * h * w, 0.0);
  for (int dx = -d; dx <= d; ++dx)
    for (int dy = -d; dy <= d; ++dy) {
      const int o = (dx + d) * side + (dy + d);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int sy = y + dx, sx = x + dy;
          if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
          double acc = 0;
          for (int i = 0; i < c; ++i)
            acc += tv[(size_t(i) * h + y) * w + x] * tl[(size_t(i) * h + sy) * w + sx];
          out[(size_t(o) * h + y) * w + x] = acc / c;
        }
    }
  return out;
}

// multi-window fusion: smoothing conv, 3/5/7 branches, softmax coefficients
// from pooled branch statistics, plus the smoothed residual
inline std::vector<double> fusion_naive(const CfmLayer<double>& L,
                                        const std::vector<double>& stack, int in_c, int h,
                                        int w) {
  const int c = L.channels;
  auto s = nconv(stack, in_c, h, w, L.smooth.w.data(), c, 3, 1, L.smooth.b.data());
  auto b3 = nconv(s, c, h, w, L.win3.w.data(), c, 3, 1, L.win3.b.data());
  auto b5 = nconv(s, c, h, w, L.win5.w.data(), c, 5, 2, L.win5.b.data());
  auto b7 = nconv(s, c, h, w, L.win7.w.data(), c, 7, 3, L.win7.b.data());
  std::vector<double> pooled(size_t(3) * c, 0.0);
  const std::vector<double>* branches[3] = {&b3, &b5, &b7};
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < c; ++i) {
      double acc = 0;
      for (int y = 0; y < h * w; ++y) acc += (*branches[b])[size_t(i) * h * w + y];
      pooled[size_t(b) * c + i] = acc / (h * w);
    }
  std::vector<double> logits(3, 0.0);
  for (int j = 0; j < 3; ++j) {
    double acc = L.coeff.b.data()[size_t(j)];
    for (int p = 0; p < 3 * c; ++p) acc += pooled[size_t(p)] * L.coeff.w.data()[size_t(p) * 3 + j];
    logits[size_t(j)] = acc;
  }
  auto wgt = nsoftmax_row(logits);
  std::vector<double> out(s.size());
  for (size_t i = 0; i < s.size(); ++i)
    out[i] = wgt[0] * b3[i] + wgt[1] * b5[i] + wgt[2] * b7[i] + s[i];
  return out;
}

// channel intensification: conv-ReLU-conv, channel attention, residual
inline std::vector<double> channel_intensify_naive(const CfmLayer<double>& L,
                                                   const std::vector<double>& x, int h, int w) {
  const int c = L.channels;
  auto h1 = nconv(x, c, h, w, L.ci_conv1.w.data(), c, 3, 1, L.ci_conv1.b.data());
  for (auto& v : h1) v = std::max(v, 0.0);
  auto h2 = nconv(h1, c, h, w, L.ci_conv2.w.data(), c, 3, 1, L.ci_conv2.b.data());
  std::vector<double> pooled(size_t(c), 0.0);
  for (int i = 0; i < c; ++i) {
    double acc = 0;
    for (int y = 0; y < h * w; ++y) acc += h2[size_t(i) * h * w + y];
    pooled[size_t(i)] = acc / (h * w);
  }
  const int hidden = L.ca1.w.dim(1);
  std::vector<double> mid(size_t(hidden), 0.0);
  for (int j = 0; j < hidden; ++j) {
    double acc = L.ca1.b.data()[size_t(j)];
    for (int p = 0; p < c; ++p) acc += pooled[size_t(p)] * L.ca1.w.data()[size_t(p) * hidden + j];
    mid[size_t(j)] = std::max(acc, 0.0);
  }
  std::vector<double> att(size_t(c), 0.0);
  for (int j = 0; j < c; ++j) {
    double acc = L.ca2.b.data()[size_t(j)];
    for (int p = 0; p < hidden; ++p) acc += mid[size_t(p)] * L.ca2.w.data()[size_t(p) * c + j];
    att[size_t(j)] = 1.0 / (1.0 + std::exp(-acc));
  }
  std::vector<double> out(x.size());
  for (int i = 0; i < c; ++i)
    for (int y = 0; y < h * w; ++y)
      out[size_t(i) * h * w + y] = h2[size_t(i) * h * w + y] * att[size_t(i)] + x[size_t(i) * h * w + y];
  return out;
}

// full fusion path T_e from the gated branches; Eq 11 is then V_e + T_e
inline std::vector<double> cfm_fusion_naive(const CfmLayer<double>& L,
                                            const std::vector<double>& ve, int c, int h, int w,
                                            const std::vector<double>& ft, int ct, int m) {
  auto tv = gate_naive(L.theta_gate, eq6_visual_integration(L, ve, c, h, w), c, h, w);
  auto tl = gate_naive(L.phi_gate, eq8_multimodal(L, ve, c, h, w, ft, ct, m), c, h, w);
  auto corr = eq10_correlation(tv, tl, c, h, w, L.corr_radius);
  std::vector<double> stack;
  stack.insert(stack.end(), tv.begin(), tv.end());
  stack.insert(stack.end(), tl.begin(), tl.end());
  stack.insert(stack.end(), corr.begin(), corr.end());
  const int off = (2 * L.corr_radius + 1) * (2 * L.corr_radius + 1);
  auto fused = fusion_naive(L, stack, 2 * c + off, h, w);
  return channel_intensify_naive(L, fused, h, w);
}

// Eq 15: bilinear rotation of a [Co,Ci,k,k] kernel about its center
inline std::vector<double> rotate_naive(const std::vector<double>& ker, int co, int ci, int k,
                                        double theta) {
  std::vector<double> out(ker.size(), 0.0);
  const double c = std::cos(theta), s = std::sin(theta), ctr = (k - 1) / 2.0;
  for (int f = 0; f < co * ci; ++f)
    for (int r = 0; r < k; ++r)
      for (int col = 0; col < k; ++col) {
        const double dy = r - ctr, dx = col - ctr;
        const double sy = c * dy + s * dx + ctr;
        const double sx = -s * dy + c * dx + ctr;
        const int y0 = int(std::floor(sy)), x0 = int(std::floor(sx));
        const double fy = sy - y0, fx = sx - x0;
        double v = 0;
        for (int ry = 0; ry < 2; ++ry)
          for (int rx = 0; rx < 2; ++rx) {
            const int y = y0 + ry, x = x0 + rx;
            if (y < 0 || y >= k || x < 0 || x >= k) continue;
            v += (ry ? fy : 1 - fy) * (rx ? fx : 1 - fx) * ker[size_t(f) * k * k + size_t(y) * k + x];
          }
        out[size_t(f) * k * k + size_t(r) * k + col] = v;
      }
  return out;
}

// Eq 16: R = V * sum_i lambda_i W_i'
inline std::vector<double> eq16_arc(const ArcBank<double>& bank, const std::vector<double>& v,
                                    int c, int h, int w, const std::vector<double>& theta,
                                    const std::vector<double>& lambda) {
  std::vector<double> combined(size_t(c) * c * 9, 0.0);
  for (int i = 0; i < bank.n; ++i) {
    auto rot = rotate_naive(bank.kernels[size_t(i)].data(), c, c, 3, theta[size_t(i)]);
    for (size_t j = 0; j < combined.size(); ++j) combined[j] += lambda[size_t(i)] * rot[j];
  }
  return nconv(v, c, h, w, combined, c, 3, 1, {});
}

// Eq 17 stack inside one refinement block: expand, per-layer V_k = V_{k-1} *
// S_k + R_{k-1}, sum of all layer outputs, contract
inline std::vector<double> msrc_block_naive(const MsrcBlock<double>& blk,
                                            const std::vector<double>& x, int in_c, int h,
                                            int w, const std::vector<double>& theta,
                                            const std::vector<double>& lambda) {
  const int e = blk.width;
  auto v = nconv(x, in_c, h, w, blk.expand.w.data(), e, 1, 0, blk.expand.b.data());
  std::vector<double> sum(size_t(e) * h * w, 0.0);
  for (size_t k = 0; k < blk.scale_convs.size(); ++k) {
    const int ks = blk.scale_convs[k].w.dim(2);
    auto sk = nconv(v, e, h, w, blk.scale_convs[k].w.data(), e, ks, (ks - 1) / 2,
                    blk.scale_convs[k].b.data());
    auto r = eq16_arc(blk.banks[k], v, e, h, w, theta, lambda);
    for (size_t i = 0; i < sk.size(); ++i) sk[i] += r[i];
    for (size_t i = 0; i < sk.size(); ++i) sum[i] += sk[i];
    v = sk;
  }
  return nconv(sum, e, h, w, blk.contract.w.data(), in_c, 1, 0, blk.contract.b.data());
}

}  // namespace mafn::transcription
