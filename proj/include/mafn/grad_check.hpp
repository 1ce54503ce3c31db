#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mafn/tensor.hpp"

namespace mafn {

// Central-difference comparison of reverse-mode gradients. The callable must
// rebuild a scalar output from the given leaf tensors on every invocation.
// Run in double; float finite differences are too noisy for a tight gate.
// Returns max over all input entries of |analytic - numeric| / max(1, |a|, |n|).
inline double grad_check(
    const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& build,
    std::vector<Tensor<double>> inputs, double eps = 1e-5) {
  if (eps <= 0) throw std::invalid_argument("grad_check: eps must be positive");
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  Tensor<double> out = build(inputs);
  if (out.size() != 1)
    throw std::invalid_argument("grad_check: op output must be scalar; reduce first");
  backward(out);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& in : inputs) analytic.push_back(in.grad());

  double max_err = 0;
  {
    NoGradGuard ng;
    for (size_t t = 0; t < inputs.size(); ++t) {
      auto& vals = inputs[t].data();
      for (size_t i = 0; i < vals.size(); ++i) {
        const double keep = vals[i];
        vals[i] = keep + eps;
        const double fp = build(inputs).item();
        vals[i] = keep - eps;
        const double fm = build(inputs).item();
        vals[i] = keep;
        const double num = (fp - fm) / (2 * eps);
        const double ana = analytic[t][i];
        const double err = std::abs(ana - num) /
                           std::max({1.0, std::abs(ana), std::abs(num)});
        max_err = std::max(max_err, err);
      }
    }
  }
  return max_err;
}

}  // namespace mafn
