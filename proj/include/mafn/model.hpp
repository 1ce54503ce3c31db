#pragma once

#include <string>
#include <vector>

#include "mafn/an_swint.hpp"
#include "mafn/cfm.hpp"
#include "mafn/msrc.hpp"
#include "mafn/nn.hpp"
#include "mafn/text_encoder.hpp"

namespace mafn {

struct ModelConfig {
  int stages = 4;
  int window = 4;
  int channels = 16;  // C_1; doubled at each downsampling stage
  int patch = 4;
  int corr_radius = 3;
  std::vector<int> vi_kernels = {3, 5};
  std::vector<int> msrc_kernels = {1, 3, 5};
  int msrc_width = 32;
  int arc_kernels = 4;  // n rotated kernels per bank
  int text_width = 32;
  int vocab_size = 16;
  bool text_positional = true;

  // ablation ladder
  bool adaptive_noise = true;
  bool cfm_fusion = true;
  bool msrc = true;
  bool ablate_language = false;

  std::vector<int> stage_channels() const {
    std::vector<int> out;
    int c = channels;
    for (int i = 0; i < stages; ++i) {
      out.push_back(c);
      if (i + 1 < stages) c *= 2;
    }
    return out;
  }
};

template <typename T>
struct ModelHooks {
  SwintHooks swint;
  CfmHooks cfm;
  MsrcHooks<T> msrc;
};

template <typename T>
struct MafnModel {
  ModelConfig cfg;
  ParamRegistry<T> params;
  TextEncoder<T> text;
  PatchEmbed<T> patch_embed;
  std::vector<CfmLayer<T>> layers;
  Decoder<T> decoder;

  explicit MafnModel(const ModelConfig& cfg_, uint64_t init_seed = 1) : cfg(cfg_) {
    Rng rng(init_seed);
    text = TextEncoder<T>(params, cfg.vocab_size, cfg.text_width, rng, cfg.text_positional);
    const auto widths = cfg.stage_channels();
    patch_embed = PatchEmbed<T>(params, cfg.patch, widths[0], rng);
    for (int i = 1; i <= cfg.stages; ++i) {
      const int in_c = widths[size_t(i >= 2 ? i - 2 : 0)];
      const int out_c = widths[size_t(i - 1)];
      layers.emplace_back(params, "cfm" + std::to_string(i), i, in_c, out_c, cfg.window,
                          cfg.text_width, cfg.corr_radius, cfg.vi_kernels, rng,
                          cfg.adaptive_noise, cfg.cfm_fusion);
    }
    decoder = Decoder<T>(params, widths, cfg.msrc_width, cfg.msrc_kernels, cfg.arc_kernels,
                         rng, cfg.msrc);
  }

  // per-stage F_e features for an image/expression pair
  std::vector<Tensor<T>> encode(const Tensor<T>& image, const std::vector<int>& tokens,
                                const ModelHooks<T>& hooks = {}) const {
    Tensor<T> ft = cfg.ablate_language
                       ? Tensor<T>::zeros({cfg.text_width, int(tokens.size())})
                       : text.forward(tokens);
    Tensor<T> f = patch_embed.forward(image);
    std::vector<Tensor<T>> stage_features;
    for (const auto& layer : layers) {
      f = layer.forward(f, ft, hooks.cfm, hooks.swint);
      stage_features.push_back(f);
    }
    return stage_features;
  }

  // mask logits [1,H,W] at the input resolution
  Tensor<T> forward(const Tensor<T>& image, const std::vector<int>& tokens,
                    const ModelHooks<T>& hooks = {}) const {
    auto stage_features = encode(image, tokens, hooks);
    return decoder.forward(stage_features, image.dim(1), image.dim(2), hooks.msrc);
  }
};

}  // namespace mafn
