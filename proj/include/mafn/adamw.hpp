#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mafn/nn.hpp"

namespace mafn {

// AdamW with decoupled weight decay: the decay is applied directly to the
// weights, never folded into the gradient moments.
template <typename T>
class AdamW {
 public:
  AdamW() = default;
  AdamW(ParamRegistry<T>& params, double lr, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8)
      : params_(&params), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
    for (auto& [name, t] : params.items()) {
      (void)name;
      m_.emplace_back(t.size(), T(0));
      v_.emplace_back(t.size(), T(0));
    }
  }

  void step() {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(b1_, double(step_count_));
    const double bc2 = 1.0 - std::pow(b2_, double(step_count_));
    auto& items = params_->items();
    for (size_t p = 0; p < items.size(); ++p) {
      auto& t = items[p].second;
      auto& grad = t.grad();
      auto& val = t.data();
      auto& m = m_[p];
      auto& v = v_[p];
      for (size_t i = 0; i < val.size(); ++i) {
        const double g = double(grad[i]);
        if (!std::isfinite(g))
          throw std::runtime_error("AdamW: non-finite gradient in parameter '" +
                                   items[p].first + "'");
        m[i] = T(b1_ * double(m[i]) + (1.0 - b1_) * g);
        v[i] = T(b2_ * double(v[i]) + (1.0 - b2_) * g * g);
        const double mhat = double(m[i]) / bc1;
        const double vhat = double(v[i]) / bc2;
        val[i] = T(double(val[i]) - lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * double(val[i])));
      }
    }
  }

  int64_t step_count() const { return step_count_; }
  void set_step_count(int64_t s) { step_count_ = s; }
  double learning_rate() const { return lr_; }
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }

 private:
  ParamRegistry<T>* params_ = nullptr;
  double lr_ = 1e-3, wd_ = 0.0, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  int64_t step_count_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace mafn
