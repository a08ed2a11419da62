#pragma once

#include <span>

#include "ossdet/model/params.hpp"

namespace ossdet::model {

/// sigmoid(conv3x3_{C->1}(relu(conv3x3_{C->C}(f)))).
class ObjectMask {
 public:
  ObjectMask(ParamStore& ps, std::size_t channels, const std::string& prefix = "object_mask");
  Tensor predict(const Tensor& f) const;

  Conv conv1;
  Conv conv2;
};

struct ActivationLoss {
  Tensor l_i;    // scalar tensors, batch means
  Tensor l_d;
  Tensor l_act;  // l_i + gamma * l_d
};

/// Per image: L_I = 1 - sum(Mp Mg) / max(sum Mg, eps), zero for images without
/// foreground; L_D = sum(Mp (1 - H(Mg))) / max(sum Mp, eps). Averaged over the
/// batch. `m_g` is constant data shaped like `m_p`.
ActivationLoss activation_loss(const Tensor& m_p, std::span<const double> m_g, double gamma,
                               double eps = 1e-8);

/// f * m_p, mask broadcast over channels.
Tensor apply_mask(const Tensor& f, const Tensor& m_p);

}  // namespace ossdet::model
