#pragma once

#include <string>
#include <vector>

#include "mafn/nn.hpp"
#include "mafn/ops.hpp"
#include "mafn/spatial_ops.hpp"

// Top-down decoder with multi-scale refinement convolution: per decoding step
// the working feature is upsampled to the next-finer stage, concatenated with
// that stage, refined by stacked layers that each sum a fixed-size conv with
// an adaptive rotated conv, then projected down by a conv + norm + ReLU.

namespace mafn {

template <typename T>
struct MsrcHooks {
  bool zero_arc = false;          // drop the rotated-conv branch
  bool freeze_predictor = false;  // use forced angles/weights below
  std::vector<T> forced_theta;
  std::vector<T> forced_lambda;
};

// n learnable kernels rotated by predicted angles and blended by predicted
// convex weights, folded into one kernel before a single convolution
template <typename T>
struct ArcBank {
  int n = 4;
  int channels = 0;
  static constexpr T theta_bound = T(1.5707963267948966);  // pi/2
  std::vector<Tensor<T>> kernels;  // n x [C,C,3,3]
  Tensor<T> pred_dw;               // depthwise [C,3,3]
  Linear<T> head_theta, head_lambda;

  ArcBank() = default;
  ArcBank(ParamRegistry<T>& reg, const std::string& name, int channels_, int n_, Rng& rng)
      : n(n_), channels(channels_) {
    for (int i = 0; i < n_; ++i)
      kernels.push_back(reg.add(name + ".k" + std::to_string(i),
                                xavier_uniform<T>({channels_, channels_, 3, 3},
                                                  channels_ * 9, channels_ * 9, rng)));
    pred_dw = reg.add(name + ".pred_dw", xavier_uniform<T>({channels_, 3, 3}, 9, 9, rng));
    head_theta = Linear<T>(reg, name + ".head_theta", channels_, n_, rng);
    head_lambda = Linear<T>(reg, name + ".head_lambda", channels_, n_, rng);
  }

  // depthwise conv, global average pooling, two small heads; angles bounded
  // by tanh, weights by softmax
  std::pair<Tensor<T>, Tensor<T>> predict(const Tensor<T>& v) const {
    Tensor<T> pooled = reshape(global_avg_pool(depthwise_conv2d(v, pred_dw, 1, 1)),
                               {1, channels});
    Tensor<T> theta = reshape(scale(tanh_act(head_theta(pooled)), theta_bound), {n});
    Tensor<T> lambda = reshape(softmax_rows(head_lambda(pooled)), {n});
    return {theta, lambda};
  }

  Tensor<T> combined_kernel(const Tensor<T>& theta, const Tensor<T>& lambda) const {
    Tensor<T> acc;
    for (int i = 0; i < n; ++i) {
      Tensor<T> rotated = scale_t(rotate_kernel(kernels[size_t(i)], take(theta, i)),
                                  take(lambda, i));
      acc = i == 0 ? rotated : add(acc, rotated);
    }
    return acc;
  }

  Tensor<T> forward(const Tensor<T>& v, const MsrcHooks<T>& hooks = {}) const {
    Tensor<T> theta, lambda;
    if (hooks.freeze_predictor) {
      theta = Tensor<T>::from_data({n}, hooks.forced_theta);
      lambda = Tensor<T>::from_data({n}, hooks.forced_lambda);
    } else {
      std::tie(theta, lambda) = predict(v);
    }
    return conv2d(v, combined_kernel(theta, lambda), 1, 1);
  }
};

template <typename T>
struct MsrcBlock {
  int width = 0;  // working width after the expanding point-wise conv
  ConvLayer<T> expand, contract;
  std::vector<ConvLayer<T>> scale_convs;  // S_k, kernel sizes from config
  std::vector<ArcBank<T>> banks;          // one bank per layer

  MsrcBlock() = default;
  MsrcBlock(ParamRegistry<T>& reg, const std::string& name, int in_channels, int width_,
            const std::vector<int>& kernel_sizes, int arc_n, Rng& rng)
      : width(width_) {
    expand = ConvLayer<T>(reg, name + ".expand", in_channels, width_, 1, rng);
    contract = ConvLayer<T>(reg, name + ".contract", width_, in_channels, 1, rng);
    for (size_t k = 0; k < kernel_sizes.size(); ++k) {
      scale_convs.emplace_back(reg, name + ".s" + std::to_string(k), width_, width_,
                               kernel_sizes[k], rng);
      banks.emplace_back(reg, name + ".arc" + std::to_string(k), width_, arc_n, rng);
    }
  }

  // V_k = V_{k-1} * S_k + ARC(V_{k-1}); sum of all layer outputs, converted
  // back to the input width
  Tensor<T> forward(const Tensor<T>& x, const MsrcHooks<T>& hooks = {}) const {
    Tensor<T> v = expand(x);
    Tensor<T> sum;
    for (size_t k = 0; k < scale_convs.size(); ++k) {
      Tensor<T> out = scale_convs[k](v);
      if (!hooks.zero_arc) out = add(out, banks[k].forward(v, hooks));
      sum = k == 0 ? out : add(sum, out);
      v = out;
    }
    return contract(sum);
  }
};

template <typename T>
struct Decoder {
  bool msrc_enabled = true;
  std::vector<int> stage_channels;  // C_1..C_N
  std::vector<MsrcBlock<T>> blocks;
  std::vector<ConvLayer<T>> dec_convs;
  std::vector<Tensor<T>> norm_g, norm_b;
  ConvLayer<T> head;

  Decoder() = default;
  Decoder(ParamRegistry<T>& reg, const std::vector<int>& stage_channels_, int msrc_width,
          const std::vector<int>& msrc_kernels, int arc_n, Rng& rng, bool use_msrc = true)
      : msrc_enabled(use_msrc), stage_channels(stage_channels_) {
    const int n = int(stage_channels_.size());
    if (n < 2) op_error("decoder", "needs at least two stages");
    for (int j = n - 2; j >= 0; --j) {
      const std::string name = "decoder.l" + std::to_string(j + 1);
      const int cat_w = stage_channels_[size_t(j + 1)] + stage_channels_[size_t(j)];
      if (use_msrc)
        blocks.emplace_back(reg, name + ".msrc", cat_w, msrc_width, msrc_kernels, arc_n, rng);
      dec_convs.emplace_back(reg, name + ".dec", cat_w, stage_channels_[size_t(j)], 3, rng);
      norm_g.push_back(reg.add(name + ".norm.g", Tensor<T>::ones({stage_channels_[size_t(j)]})));
      norm_b.push_back(reg.add(name + ".norm.b", Tensor<T>::zeros({stage_channels_[size_t(j)]})));
    }
    head = ConvLayer<T>(reg, "decoder.head", stage_channels_[0], 1, 1, rng);
  }

  // stages = [F_e^1 .. F_e^N]; result is mask logits at the image size
  Tensor<T> forward(const std::vector<Tensor<T>>& stages, int image_h, int image_w,
                    const MsrcHooks<T>& hooks = {}) const {
    if (stages.size() < 2) op_error("decoder", "stage list shorter than 2");
    if (stages.size() != stage_channels.size())
      op_error("decoder", "stage count mismatch with configuration");
    std::vector<bool> consumed(stages.size(), false);
    Tensor<T> g = stages.back();
    consumed[stages.size() - 1] = true;
    for (size_t step = 0; step < dec_convs.size(); ++step) {
      const size_t j = stages.size() - 2 - step;
      const Tensor<T>& skip = stages[j];
      consumed[j] = true;
      Tensor<T> up = bilinear_resize(g, skip.dim(1), skip.dim(2));
      Tensor<T> x = concat<T>({up, skip}, 0);
      Tensor<T> m = msrc_enabled ? blocks[step].forward(x, hooks) : x;
      g = relu(channel_norm2d(dec_convs[step](m), norm_g[step], norm_b[step]));
    }
    for (bool c : consumed)
      if (!c) op_error("decoder", "a stage output was left unconsumed");
    return bilinear_resize(head(g), image_h, image_w);
  }
};

}  // namespace mafn
