#pragma once

#include <string>
#include <vector>

#include "mafn/an_swint.hpp"
#include "mafn/nn.hpp"
#include "mafn/ops.hpp"
#include "mafn/spatial_ops.hpp"

// Correlation Fusion Module. Per stage: enhance visual priors behind a vision
// gate, align language to vision behind a language gate, correlate the two
// gated maps into an offset volume, refine through multi-window fusion and
// channel intensification, and emit V_e + T_e.

namespace mafn {

struct CfmHooks {
  bool zero_fusion = false;      // T_e forced to zero: output becomes V_e
  int force_coeff_onehot = -1;   // pick one fusion branch outright
  bool unit_ca = false;          // channel attention forced to all-ones
};

template <typename T>
struct CfmLayer {
  int channels = 0;     // C_i
  int corr_radius = 3;  // max displacement d
  bool fusion_enabled = true;
  SwintStage<T> stage;
  std::vector<ConvLayer<T>> vi_convs;
  GateNet<T> theta_gate, phi_gate;  // vision / language gates
  Tensor<T> w_eq, w_e;              // [C,C]
  Tensor<T> w_lk, w_lv;             // [Ct,C]
  Linear<T> proj;                   // 1x1 Proj in token space
  ConvLayer<T> smooth, win3, win5, win7;
  Linear<T> coeff;                  // pooled branches -> 3 weights
  ConvLayer<T> ci_conv1, ci_conv2;
  Linear<T> ca1, ca2;

  CfmLayer() = default;
  CfmLayer(ParamRegistry<T>& reg, const std::string& name, int index, int in_channels,
           int out_channels, int window, int text_width, int corr_radius_,
           const std::vector<int>& vi_kernels, Rng& rng, bool adaptive_noise = true,
           bool fusion = true)
      : channels(out_channels),
        corr_radius(corr_radius_),
        fusion_enabled(fusion),
        stage(reg, name + ".swint", index, in_channels, out_channels, window, rng,
              adaptive_noise),
        theta_gate(reg, name + ".vgate", out_channels, rng),
        phi_gate(reg, name + ".lgate", out_channels, rng) {
    const int c = out_channels;
    for (size_t j = 0; j < vi_kernels.size(); ++j)
      vi_convs.emplace_back(reg, name + ".vi" + std::to_string(j), c, c, vi_kernels[j], rng);
    w_eq = reg.add(name + ".w_eq", xavier_uniform<T>({c, c}, c, c, rng));
    w_e = reg.add(name + ".w_e", xavier_uniform<T>({c, c}, c, c, rng));
    w_lk = reg.add(name + ".w_lk", xavier_uniform<T>({text_width, c}, text_width, c, rng));
    w_lv = reg.add(name + ".w_lv", xavier_uniform<T>({text_width, c}, text_width, c, rng));
    proj = Linear<T>(reg, name + ".proj", c, c, rng);
    if (fusion) {
      const int offsets = (2 * corr_radius_ + 1) * (2 * corr_radius_ + 1);
      smooth = ConvLayer<T>(reg, name + ".smooth", 2 * c + offsets, c, 3, rng);
      win3 = ConvLayer<T>(reg, name + ".win3", c, c, 3, rng);
      win5 = ConvLayer<T>(reg, name + ".win5", c, c, 5, rng);
      win7 = ConvLayer<T>(reg, name + ".win7", c, c, 7, rng);
      coeff = Linear<T>(reg, name + ".coeff", 3 * c, 3, rng);
      ci_conv1 = ConvLayer<T>(reg, name + ".ci1", c, c, 3, rng);
      ci_conv2 = ConvLayer<T>(reg, name + ".ci2", c, c, 3, rng);
      const int hidden = std::max(4, c / 4);
      ca1 = Linear<T>(reg, name + ".ca1", c, hidden, rng);
      ca2 = Linear<T>(reg, name + ".ca2", hidden, c, rng);
    }
  }

  // receptive-field weighting: sigmoid of summed channel-mean conv responses,
  // broadcast onto V_e
  Tensor<T> visual_integration(const Tensor<T>& ve) const {
    Tensor<T> acc;
    for (size_t j = 0; j < vi_convs.size(); ++j) {
      Tensor<T> m = mean_channels(vi_convs[j](ve));
      acc = j == 0 ? m : add(acc, m);
    }
    return mul_spatial_map(ve, sigmoid(acc));
  }

  Tensor<T> vision_gate(const Tensor<T>& gv) const { return theta_gate(gv); }
  Tensor<T> language_gate(const Tensor<T>& gl) const { return phi_gate(gl); }

  // cross-attention from visual grid queries onto text keys/values, gated by
  // a projected copy of the grid, then a 1x1 projection
  Tensor<T> multimodal_attention(const Tensor<T>& ve, const Tensor<T>& ft) const {
    if (ft.rank() != 2 || ft.dim(0) != w_lk.dim(0))
      op_error("multimodal_attention",
               "text features " + shape_str(ft.shape()) + " do not match text width");
    Tensor<T> tokens = to_tokens(ve);          // [HW, C]
    Tensor<T> text_rows = transpose(ft);       // [M, Ct]
    Tensor<T> att = attention(matmul(tokens, w_eq), matmul(text_rows, w_lk),
                              matmul(text_rows, w_lv));
    Tensor<T> gated = mul(att, matmul(tokens, w_e));
    return from_tokens(proj(gated), ve.dim(1), ve.dim(2));
  }

  // smoothing conv, three window branches, learned convex coefficients,
  // residual from the smoothed stack
  Tensor<T> multi_window_fusion(const Tensor<T>& stack, const CfmHooks& hooks = {}) const {
    Tensor<T> s = smooth(stack);
    Tensor<T> branches[3] = {win3(s), win5(s), win7(s)};
    Tensor<T> weights;
    if (hooks.force_coeff_onehot >= 0) {
      std::vector<T> w(3, T(0));
      w[size_t(hooks.force_coeff_onehot)] = T(1);
      weights = Tensor<T>::from_data({3}, std::move(w));
    } else {
      Tensor<T> pooled = concat<T>({global_avg_pool(branches[0]), global_avg_pool(branches[1]),
                                    global_avg_pool(branches[2])},
                                   0);
      weights = reshape(softmax_rows(coeff(reshape(pooled, {1, 3 * channels}))), {3});
    }
    Tensor<T> fused = scale_t(branches[0], take(weights, 0));
    fused = add(fused, scale_t(branches[1], take(weights, 1)));
    fused = add(fused, scale_t(branches[2], take(weights, 2)));
    return add(fused, s);
  }

  Tensor<T> fusion_coefficients(const Tensor<T>& stack) const {
    Tensor<T> s = smooth(stack);
    Tensor<T> pooled = concat<T>(
        {global_avg_pool(win3(s)), global_avg_pool(win5(s)), global_avg_pool(win7(s))}, 0);
    return reshape(softmax_rows(coeff(reshape(pooled, {1, 3 * channels}))), {3});
  }

  // conv-ReLU-conv, channel attention from pooled statistics, residual
  Tensor<T> channel_intensify(const Tensor<T>& fused, const CfmHooks& hooks = {}) const {
    Tensor<T> h = ci_conv2(relu(ci_conv1(fused)));
    Tensor<T> weights;
    if (hooks.unit_ca) {
      weights = Tensor<T>::ones({channels});
    } else {
      Tensor<T> squeezed = reshape(global_avg_pool(h), {1, channels});
      weights = reshape(sigmoid(ca2(relu(ca1(squeezed)))), {channels});
    }
    return add(mul_channel_vec(h, weights), fused);
  }

  // F_e^i = V_e^i + T_e^i
  Tensor<T> forward(const Tensor<T>& f_prev, const Tensor<T>& ft, const CfmHooks& hooks = {},
                    const SwintHooks& swint_hooks = {}) const {
    Tensor<T> ve = stage.forward(f_prev, swint_hooks);
    if (hooks.zero_fusion) return ve;
    Tensor<T> tv = vision_gate(visual_integration(ve));
    Tensor<T> tl = language_gate(multimodal_attention(ve, ft));
    if (!fusion_enabled) return add(add(ve, tv), tl);  // correlation-aware fusion ablated
    Tensor<T> corr = correlation_volume(tv, tl, corr_radius);
    Tensor<T> fused = multi_window_fusion(concat<T>({tv, tl, corr}, 0), hooks);
    Tensor<T> te = channel_intensify(fused, hooks);
    return add(ve, te);
  }
};

}  // namespace mafn
