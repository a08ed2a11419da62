#pragma once

#include "ossdet/model/params.hpp"

namespace ossdet::model {

enum class SoftmaxAxis {
  row,  // normalise over the second index of V_l V_{l-1}^T
  col,
};

struct CafrConfig {
  std::size_t channels = 32;
  SoftmaxAxis axis = SoftmaxAxis::row;
};

struct CafrWeights {
  Tensor attention;  // A, (n, 1, C, C)
  Tensor w_high;     // A^T V_l, (n, C, 1, 1)
  Tensor w_low;      // A V_{l-1}
};

/// A = softmax(V_l V_{l-1}^T) along `axis`; v_* are (n, C, 1, 1).
CafrWeights cafr_weights(const Tensor& v_high, const Tensor& v_low, SoftmaxAxis axis);

class Cafr {
 public:
  Cafr(ParamStore& ps, const CafrConfig& cfg, const std::string& prefix);

  /// W_l * F_hat_l + W_{l-1} * align(F_bar_{l-1}); F_bar_{l-1} must be at
  /// exactly twice the resolution of F_hat_l.
  Tensor forward(const Tensor& f_hat, const Tensor& f_bar_low) const;

  Conv align;      // 3x3 stride 2
  Linear fc_high;  // zero weights, unit bias: V starts at 1
  Linear fc_low;

 private:
  CafrConfig cfg_;
};

}  // namespace ossdet::model
