#pragma once

#include "ossdet/model/params.hpp"

namespace ossdet::model {

struct SacfConfig {
  std::size_t channels = 32;
  std::size_t k = 3;        // SFA patch size, odd, 3..9
  double eps_norm = 1e-8;   // distances below this carry no gradient
};

/// Per pixel, softmax(-||p - q||) over the k x k neighbourhood (offsets
/// clamped to the image, centre included) and p' = sum_q e_q q + p.
/// Evaluated as 2p + sum_q e_q (q - p), which is exact on flat regions.
Tensor sfa_aggregate(const Tensor& x, std::size_t k, double eps_norm = 1e-8);

/// Neighbourhood weights of sfa_aggregate, laid out (n, k*k, h, w) with the
/// offset index (dm + r) * k + (dn + r), r = (k - 1) / 2.
std::vector<double> sfa_weights(const Tensor& x, std::size_t k);

struct FrequencySplit {
  Tensor lf;  // avg3x3s2(F)
  Tensor hf;  // F - upsample2x(lf)
};
FrequencySplit sde_decompose(const Tensor& f);

class Sacf {
 public:
  Sacf(ParamStore& ps, const SacfConfig& cfg, const std::string& prefix);

  /// (1 + sigmoid(conv1x1(hf))) * hf.
  Tensor sde_enhance(const Tensor& hf) const;
  /// conv1x1([hf_e, upsample2x(conv3x3(lf))]) + f.
  Tensor sde_fuse(const Tensor& hf_e, const Tensor& lf, const Tensor& f) const;
  struct Gates {
    Tensor high;  // W_l, (n, 1, 2H, 2W)
    Tensor low;   // W_{l-1}
  };
  /// Gates from channel means of upsample2x(f_high) and f_low.
  Gates fusion_gates(const Tensor& f_high_up, const Tensor& f_low) const;
  /// upsample2x(f_high) * W_l + f_low * W_{l-1}.
  Tensor adaptive_fuse(const Tensor& f_high, const Tensor& f_low) const;

  /// One top-down step: F_hat_{l-1} from F_hat_l and the lateral F_{l-1}.
  Tensor forward(const Tensor& f_hat_high, const Tensor& f_low) const;

  const SacfConfig& config() const { return cfg_; }

  Conv enhance;   // C -> C, 1x1
  Conv lf_conv;   // C -> C, 3x3
  Conv merge;     // 2C -> C, 1x1, zero-initialised
  Conv gate;      // 2 -> 2, 1x1, zero-initialised

 private:
  SacfConfig cfg_;
};

}  // namespace ossdet::model
