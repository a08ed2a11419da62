#pragma once

#include "ossdet/model/params.hpp"

namespace ossdet::model {

enum class CsspFusion { sum, concat_conv };

struct CsspConfig {
  std::size_t channels = 32;
  std::size_t height = 8;  // spatial size of the top level; fixes w_a / b_a
  std::size_t width = 8;
  CsspFusion fusion = CsspFusion::concat_conv;
  double eps = 1e-8;
};

/// sigmoid(w_e * GAP(f) + b_e) * f; w_e, b_e are (1, C, 1, 1).
Tensor spectral_attention(const Tensor& f, const Tensor& w_e, const Tensor& b_e);
/// sigmoid(w_a * channel_mean(f) + b_a) * f; w_a, b_a are (1, 1, H, W).
Tensor spatial_attention(const Tensor& f, const Tensor& w_a, const Tensor& b_a);

struct CrossModulated {
  Tensor a_hat;  // F_e M_ea + F_a
  Tensor e_hat;  // A_hat M_ae + F_e
  Tensor m_ea;   // (n, 1, HW, HW)
  Tensor m_ae;
};

/// Two cascaded cross-correlation modulations on (C, HW) views, each
/// correlation Frobenius-normalised (with eps) and squashed by tanh.
CrossModulated cross_modulate(const Tensor& f_e, const Tensor& f_a, double eps);

class Cssp {
 public:
  static constexpr std::size_t kMaxPositions = 4096;

  Cssp(ParamStore& ps, const CsspConfig& cfg, const std::string& prefix = "cssp");
  Tensor forward(const Tensor& f5) const;
  const CsspConfig& config() const { return cfg_; }

  Tensor w_e, b_e, w_a, b_a;
  Conv fuse;  // 2C -> C, unused when fusion == sum

 private:
  CsspConfig cfg_;
};

}  // namespace ossdet::model
