#include "ossdet/app/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace ossdet::app {

Optimizer::Optimizer(OptimizerKind kind, double lr, double momentum, double weight_decay, double grad_clip,
                     const model::ParamStore& params)
    : kind_(kind), lr_(lr), momentum_(momentum), weight_decay_(weight_decay), grad_clip_(grad_clip) {
  for (const auto& p : params.params()) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    if (kind_ == OptimizerKind::adam) v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

double Optimizer::step(model::ParamStore& params) {
  auto& ps = params.params();
  if (ps.size() != m_.size()) throw std::logic_error("optimizer state does not match the parameter list");
  double sq = 0;
  for (const auto& p : ps)
    if (p.tensor.has_grad())
      for (double g : p.tensor.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  const double clip = grad_clip_ > 0 && norm > grad_clip_ ? grad_clip_ / norm : 1.0;
  ++steps_;
  constexpr double kBeta2 = 0.999, kAdamEps = 1e-8;
  const double bc1 = 1 - std::pow(momentum_, double(steps_));
  const double bc2 = 1 - std::pow(kBeta2, double(steps_));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    tensor::Tensor& t = ps[i].tensor;
    auto w = t.data_mut();
    const bool has = t.has_grad();
    const auto g = t.grad();
    std::vector<double>& m = m_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = (has ? g[j] * clip : 0.0) + weight_decay_ * w[j];
      if (kind_ == OptimizerKind::sgd) {
        m[j] = momentum_ * m[j] + gj;
        w[j] -= lr_ * m[j];
      } else {
        double& v = v_[i][j];
        m[j] = momentum_ * m[j] + (1 - momentum_) * gj;
        v = kBeta2 * v + (1 - kBeta2) * gj * gj;
        w[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v / bc2) + kAdamEps);
      }
    }
  }
  return norm;
}

}  // namespace ossdet::app
