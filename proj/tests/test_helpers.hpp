#pragma once

#include <vector>

#include "mafn/rng.hpp"
#include "mafn/tensor.hpp"

namespace test_util {

template <typename T = double>
mafn::Tensor<T> random_tensor(mafn::Shape shape, mafn::Rng& rng, double lo = -1.0,
                              double hi = 1.0) {
  std::vector<T> v(size_t(mafn::shape_numel(shape)));
  for (auto& x : v) x = T(rng.uniform(lo, hi));
  return mafn::Tensor<T>::from_data(std::move(shape), std::move(v));
}

template <typename T>
double max_abs_diff(const mafn::Tensor<T>& a, const std::vector<double>& b) {
  double m = 0;
  for (size_t i = 0; i < a.data().size(); ++i)
    m = std::max(m, std::abs(double(a.data()[i]) - b[i]));
  return m;
}

template <typename T>
double max_abs_diff(const mafn::Tensor<T>& a, const mafn::Tensor<T>& b) {
  double m = 0;
  for (size_t i = 0; i < a.data().size(); ++i)
    m = std::max(m, std::abs(double(a.data()[i]) - double(b.data()[i])));
  return m;
}

}  // namespace test_util
