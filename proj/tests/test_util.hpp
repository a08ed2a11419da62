#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "ossdet/tensor/tensor.hpp"

namespace ossdet::testutil {

inline tensor::Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                    double hi = 1.0, bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape.numel());
  for (double& x : v) x = u(rng);
  return tensor::Tensor::from(shape, std::move(v), requires_grad);
}

inline std::size_t idx(const Shape& s, std::size_t n, std::size_t c, std::size_t h,
                       std::size_t w) {
  return ((n * s.c + c) * s.h + h) * s.w + w;
}

/// Owning copy; safe to iterate even when the tensor is a temporary.
inline std::vector<double> values(const tensor::Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace ossdet::testutil

#include "ossdet/model/params.hpp"

namespace ossdet::testutil {

/// Overwrites every parameter with uniform values so no path is degenerate.
inline void randomize(model::ParamStore& ps, std::mt19937_64& rng, double lo = -0.5,
                      double hi = 0.5) {
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& p : ps.params())
    for (double& v : p.tensor.data_mut()) v = u(rng);
}

inline std::vector<tensor::Tensor> param_tensors(const model::ParamStore& ps) {
  std::vector<tensor::Tensor> out;
  for (const auto& p : ps.params()) out.push_back(p.tensor);
  return out;
}

}  // namespace ossdet::testutil
