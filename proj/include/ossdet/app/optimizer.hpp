#pragma once

#include <cstdint>
#include <vector>

#include "ossdet/app/config.hpp"
#include "ossdet/model/params.hpp"

namespace ossdet::app {

/// Momentum SGD (v = mu v + g + wd w; w -= lr v) or Adam with L2 decay folded
/// into the gradient. State is one or two buffers per parameter.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, double momentum, double weight_decay, double grad_clip,
            const model::ParamStore& params);

  /// Applies one update from the accumulated gradients. Returns the gradient
  /// norm before clipping.
  double step(model::ParamStore& params);

  OptimizerKind kind() const { return kind_; }
  std::uint64_t steps() const { return steps_; }
  std::vector<std::vector<double>>& first() { return m_; }
  std::vector<std::vector<double>>& second() { return v_; }
  const std::vector<std::vector<double>>& first() const { return m_; }
  const std::vector<std::vector<double>>& second() const { return v_; }
  void set_steps(std::uint64_t s) { steps_ = s; }

 private:
  OptimizerKind kind_;
  double lr_, momentum_, weight_decay_, grad_clip_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;  // Adam only
};

}  // namespace ossdet::app
