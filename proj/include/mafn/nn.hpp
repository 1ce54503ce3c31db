#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mafn/ops.hpp"
#include "mafn/rng.hpp"
#include "mafn/spatial_ops.hpp"
#include "mafn/tensor.hpp"

// Parameter bookkeeping and the small layer building blocks shared by the
// model modules.

namespace mafn {

// Ordered name -> tensor registry. Registration order is the serialization
// order, so construction must be deterministic.
template <typename T>
class ParamRegistry {
 public:
  Tensor<T> add(const std::string& name, Tensor<T> t) {
    for (const auto& [n, _] : items_)
      if (n == name) throw std::invalid_argument("duplicate parameter name: " + name);
    t.set_requires_grad(true);
    items_.emplace_back(name, t);
    return t;
  }

  std::vector<std::pair<std::string, Tensor<T>>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor<T>>>& items() const { return items_; }

  int64_t count() const {
    int64_t n = 0;
    for (const auto& [_, t] : items_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : items_) t.zero_grad();
  }

  Tensor<T> find(const std::string& name) const {
    for (const auto& [n, t] : items_)
      if (n == name) return t;
    throw std::invalid_argument("no parameter named " + name);
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
};

template <typename T>
Tensor<T> xavier_uniform(Shape shape, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  std::vector<T> v(size_t(shape_numel(shape)));
  for (auto& x : v) x = T(rng.uniform(-limit, limit));
  return Tensor<T>::from_data(std::move(shape), std::move(v));
}

template <typename T>
Tensor<T> gaussian_init(Shape shape, double stddev, Rng& rng) {
  std::vector<T> v(size_t(shape_numel(shape)));
  for (auto& x : v) x = T(rng.normal(0.0, stddev));
  return Tensor<T>::from_data(std::move(shape), std::move(v));
}

// y = x W + b for [N,in] inputs
template <typename T>
struct Linear {
  Tensor<T> w, b;

  Linear() = default;
  Linear(ParamRegistry<T>& reg, const std::string& name, int in, int out, Rng& rng)
      : w(reg.add(name + ".w", xavier_uniform<T>({in, out}, in, out, rng))),
        b(reg.add(name + ".b", Tensor<T>::zeros({out}))) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return add_row_vec(matmul(x, w), b); }
};

// shape-preserving conv at stride 1 unless stated otherwise
template <typename T>
struct ConvLayer {
  Tensor<T> w, b;
  int stride = 1, padding = 0;

  ConvLayer() = default;
  ConvLayer(ParamRegistry<T>& reg, const std::string& name, int in, int out, int k, Rng& rng,
            int stride_ = 1, int padding_ = -1)
      : stride(stride_), padding(padding_ < 0 ? (k - 1) / 2 : padding_) {
    w = reg.add(name + ".w", xavier_uniform<T>({out, in, k, k}, in * k * k, out * k * k, rng));
    b = reg.add(name + ".b", Tensor<T>::zeros({out}));
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return add_channel_vec(conv2d(x, w, stride, padding), b);
  }
};

// linear -> ReLU -> linear -> tanh gate, applied as `gate(x) (.) x`
template <typename T>
struct GateNet {
  ConvLayer<T> fc1, fc2;

  GateNet() = default;
  GateNet(ParamRegistry<T>& reg, const std::string& name, int width, Rng& rng)
      : fc1(reg, name + ".fc1", width, width, 1, rng),
        fc2(reg, name + ".fc2", width, width, 1, rng) {}

  Tensor<T> gate_map(const Tensor<T>& x) const { return tanh_act(fc2(relu(fc1(x)))); }
  Tensor<T> operator()(const Tensor<T>& x) const { return mul(gate_map(x), x); }
};

// [C,H,W] -> [HW,C] token matrix and back
template <typename T>
Tensor<T> to_tokens(const Tensor<T>& x) {
  return transpose(reshape(x, {x.dim(0), x.dim(1) * x.dim(2)}));
}

template <typename T>
Tensor<T> from_tokens(const Tensor<T>& t, int h, int w) {
  return reshape(transpose(t), {t.dim(1), h, w});
}

}  // namespace mafn
