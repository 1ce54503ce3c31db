#pragma once

#include <string>
#include <vector>

#include "mafn/nn.hpp"
#include "mafn/ops.hpp"
#include "mafn/spatial_ops.hpp"

// Visual backbone stages: windowed self-attention whose keys and values carry
// learnable additive noise plus a discriminator-scaled duplicate key set.
// With zero noise and a forced-unit discriminator each stage reduces exactly
// to plain windowed attention (duplicated keys halve every softmax weight,
// duplicated values restore the sum).

namespace mafn {

struct SwintHooks {
  bool zero_noise = false;          // treat both deltas as zero
  bool unit_discriminator = false;  // force all per-token scores to 1
};

// [3,H,W] -> [C1, H/p, W/p], linear in the pixels
template <typename T>
struct PatchEmbed {
  int patch = 4;
  ConvLayer<T> proj;

  PatchEmbed() = default;
  PatchEmbed(ParamRegistry<T>& reg, int patch_, int out_channels, Rng& rng)
      : patch(patch_), proj(reg, "backbone.patch_embed", 3 * patch_ * patch_, out_channels, 1, rng) {}

  Tensor<T> forward(const Tensor<T>& image) const {
    if (image.rank() != 3 || image.dim(0) != 3)
      op_error("patch_embed", "expects a [3,H,W] image, got " + shape_str(image.shape()));
    if (image.dim(1) % patch != 0 || image.dim(2) % patch != 0)
      op_error("patch_embed", "image " + shape_str(image.shape()) +
                                  " not divisible by patch " + std::to_string(patch));
    return proj(space_to_channel(image, patch));
  }
};

// row-major windows of a [C,H,W] map; H and W must be window multiples
template <typename T>
std::vector<Tensor<T>> window_partition(const Tensor<T>& x, int window) {
  if (x.dim(1) % window != 0 || x.dim(2) % window != 0)
    op_error("window_partition", "spatial dims not divisible by window");
  std::vector<Tensor<T>> out;
  for (int wy = 0; wy < x.dim(1); wy += window)
    for (int wx = 0; wx < x.dim(2); wx += window)
      out.push_back(crop2d(x, wy, wx, window, window));
  return out;
}

template <typename T>
Tensor<T> window_merge(const std::vector<Tensor<T>>& windows, int rows, int cols) {
  std::vector<Tensor<T>> row_maps;
  for (int r = 0; r < rows; ++r) {
    std::vector<Tensor<T>> row(windows.begin() + size_t(r) * cols,
                               windows.begin() + size_t(r + 1) * cols);
    row_maps.push_back(concat(row, 2));
  }
  return concat(row_maps, 1);
}

template <typename T>
struct SwintStage {
  int index = 1;      // 1-based stage number
  int channels = 0;   // C_i
  int window = 4;
  bool adaptive = true;         // when off: plain windowed attention, no noise params
  Tensor<T> wq, wk, wv;         // [C,C] projections
  Tensor<T> delta_k, delta_v;   // [T,C] learnable noise, shared across windows
  Linear<T> da1, da2;           // discriminator MLP
  ConvLayer<T> merge;           // 2x2 patch merging projection (stages >= 2)
  bool has_merge = false;

  SwintStage() = default;
  SwintStage(ParamRegistry<T>& reg, const std::string& name, int index_, int in_channels,
             int out_channels, int window_, Rng& rng, bool adaptive_ = true)
      : index(index_), channels(out_channels), window(window_), adaptive(adaptive_) {
    const int c = out_channels, t = window_ * window_;
    wq = reg.add(name + ".wq", xavier_uniform<T>({c, c}, c, c, rng));
    wk = reg.add(name + ".wk", xavier_uniform<T>({c, c}, c, c, rng));
    wv = reg.add(name + ".wv", xavier_uniform<T>({c, c}, c, c, rng));
    if (adaptive) {
      delta_k = reg.add(name + ".delta_k", gaussian_init<T>({t, c}, 0.01, rng));
      delta_v = reg.add(name + ".delta_v", gaussian_init<T>({t, c}, 0.01, rng));
      da1 = Linear<T>(reg, name + ".da1", c, c, rng);
      da2 = Linear<T>(reg, name + ".da2", c, 1, rng);
    }
    has_merge = index_ >= 2;
    if (has_merge) merge = ConvLayer<T>(reg, name + ".merge", 4 * in_channels, out_channels, 1, rng);
  }

  // per-token scores in (0,1) summing to 1 across the window
  Tensor<T> discriminator_scores(const Tensor<T>& tokens,
                                 const SwintHooks& hooks = {}) const {
    if (tokens.rank() != 2 || tokens.dim(0) < 1)
      op_error("discriminator", "expects a non-empty [T,C] window");
    if (hooks.unit_discriminator) return Tensor<T>::ones({tokens.dim(0)});
    Tensor<T> logits = da2(relu(da1(tokens)));  // [T,1]
    return reshape(softmax_rows(transpose(logits)), {tokens.dim(0)});
  }

  // Q from the raw window; K and V each stack a noise branch on top of a
  // plain branch, so they carry 2T rows; residual included. With adaptive
  // noise ablated this is standard windowed attention.
  Tensor<T> noisy_window_attention(const Tensor<T>& tokens,
                                   const SwintHooks& hooks = {}) const {
    if (tokens.rank() != 2 || tokens.dim(1) != channels)
      op_error("noisy_window_attention", "token width mismatch");
    Tensor<T> q = matmul(tokens, wq);
    if (!adaptive)
      return add(attention(q, matmul(tokens, wk), matmul(tokens, wv)), tokens);
    if (!hooks.zero_noise && tokens.dim(0) != delta_k.dim(0))
      op_error("noisy_window_attention",
               "window of " + std::to_string(tokens.dim(0)) + " tokens vs noise of " +
                   std::to_string(delta_k.dim(0)));
    Tensor<T> scores = discriminator_scores(tokens, hooks);
    Tensor<T> k_noise = hooks.zero_noise ? matmul(tokens, wk)
                                         : matmul(add(delta_k, tokens), wk);
    Tensor<T> k_scored = matmul(scale_rows(tokens, scores), wk);
    Tensor<T> k = concat<T>({k_noise, k_scored}, 0);
    Tensor<T> v_noise = hooks.zero_noise ? matmul(tokens, wv)
                                         : matmul(add(delta_v, tokens), wv);
    Tensor<T> v = concat<T>({v_noise, matmul(tokens, wv)}, 0);
    return add(attention(q, k, v), tokens);
  }

  // downsample (stages >= 2), widow-partition, attend, merge back; odd or
  // non-window-multiple extents are zero-padded then cropped
  Tensor<T> forward(const Tensor<T>& x, const SwintHooks& hooks = {}) const {
    Tensor<T> f = x;
    if (has_merge) {
      const int ph = f.dim(1) % 2, pw = f.dim(2) % 2;
      if (ph || pw) f = pad2d(f, 0, ph, 0, pw);
      f = merge(space_to_channel(f, 2));
    }
    const int h = f.dim(1), w = f.dim(2);
    const int padded_h = (h + window - 1) / window * window;
    const int padded_w = (w + window - 1) / window * window;
    if (padded_h != h || padded_w != w) f = pad2d(f, 0, padded_h - h, 0, padded_w - w);

    auto windows = window_partition(f, window);
    std::vector<Tensor<T>> attended;
    attended.reserve(windows.size());
    for (const auto& win : windows) {
      Tensor<T> tokens = to_tokens(win);
      attended.push_back(from_tokens(noisy_window_attention(tokens, hooks), window, window));
    }
    Tensor<T> merged = window_merge(attended, padded_h / window, padded_w / window);
    if (padded_h != h || padded_w != w) merged = crop2d(merged, 0, 0, h, w);
    return merged;
  }
};

}  // namespace mafn
