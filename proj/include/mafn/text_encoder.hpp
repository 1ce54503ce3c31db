#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mafn/nn.hpp"
#include "mafn/ops.hpp"

namespace mafn {

// Token sequence -> [C x M] text features: learned embeddings, sinusoidal
// positions, one self-attention layer and one feed-forward layer.
template <typename T>
struct TextEncoder {
  int width = 0;
  bool use_positional = true;
  Tensor<T> embed;  // [V, C]
  Linear<T> wq, wk, wv, wo;
  Tensor<T> ln1_g, ln1_b, ln2_g, ln2_b;
  Linear<T> ff1, ff2;

  TextEncoder() = default;
  TextEncoder(ParamRegistry<T>& reg, int vocab_size, int width_, Rng& rng,
              bool positional = true)
      : width(width_),
        use_positional(positional),
        embed(reg.add("text.embed", gaussian_init<T>({vocab_size, width_}, 0.1, rng))),
        wq(reg, "text.attn.q", width_, width_, rng),
        wk(reg, "text.attn.k", width_, width_, rng),
        wv(reg, "text.attn.v", width_, width_, rng),
        wo(reg, "text.attn.o", width_, width_, rng),
        ln1_g(reg.add("text.ln1.g", Tensor<T>::ones({width_}))),
        ln1_b(reg.add("text.ln1.b", Tensor<T>::zeros({width_}))),
        ln2_g(reg.add("text.ln2.g", Tensor<T>::ones({width_}))),
        ln2_b(reg.add("text.ln2.b", Tensor<T>::zeros({width_}))),
        ff1(reg, "text.ff1", width_, 2 * width_, rng),
        ff2(reg, "text.ff2", 2 * width_, width_, rng) {}

  Tensor<T> positional_encoding(int m) const {
    std::vector<T> pe(size_t(m) * width);
    for (int pos = 0; pos < m; ++pos)
      for (int i = 0; i < width; ++i) {
        const double angle = pos / std::pow(10000.0, double(2 * (i / 2)) / width);
        pe[size_t(pos) * width + i] = T(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
      }
    return Tensor<T>::from_data({m, width}, std::move(pe));
  }

  // tokens -> F_t of shape [C, M]
  Tensor<T> forward(const std::vector<int>& tokens) const {
    if (tokens.empty()) op_error("text_encoder", "empty token list");
    Tensor<T> x = embedding(embed, tokens);
    if (use_positional) x = add(x, positional_encoding(int(tokens.size())));
    Tensor<T> att = wo(attention(wq(x), wk(x), wv(x)));
    x = layer_norm(add(x, att), ln1_g, ln1_b);
    Tensor<T> ff = ff2(relu(ff1(x)));
    x = layer_norm(add(x, ff), ln2_g, ln2_b);
    return transpose(x);
  }
};

}  // namespace mafn
