#pragma once

#include <memory>
#include <vector>

#include "ossdet/data/mask.hpp"
#include "ossdet/model/backbone.hpp"
#include "ossdet/model/cafr.hpp"
#include "ossdet/model/cssp.hpp"
#include "ossdet/model/detect_head.hpp"
#include "ossdet/model/object_mask.hpp"
#include "ossdet/model/sacf.hpp"

namespace ossdet::model {

struct DetectorConfig {
  std::size_t in_bands = 8;
  std::size_t num_classes = 6;
  std::size_t image_height = 256;
  std::size_t image_width = 256;
  std::size_t channels = 32;
  std::array<std::size_t, 5> widths = {16, 24, 32, 48, 64};
  std::size_t sfa_k = 3;
  CsspFusion cssp_fusion = CsspFusion::concat_conv;
  SoftmaxAxis cafr_axis = SoftmaxAxis::row;
  HeadConfig head;  // channels and num_classes are overwritten from above
};

struct ForwardResult {
  Pyramid pyramid;
  std::array<Tensor, 4> refined;  // F_bar_2..F_bar_5
  Tensor mask;                    // M_p at stride 4
  std::vector<LevelOutput> head;
};

struct LossBreakdown {
  Tensor total;
  Tensor det;
  Tensor act;
  Tensor l_i;
  Tensor l_d;
  double positives = 0;
};

/// Backbone -> CSSP on F_5 -> three SACF top-down steps -> object mask on
/// F_hat_2 -> three CAFR bottom-up steps -> shared head on F_bar_2..F_bar_5.
class Detector {
 public:
  Detector(const DetectorConfig& cfg, std::uint64_t seed);

  ForwardResult forward(const Tensor& x) const;
  LossBreakdown loss(const ForwardResult& out, const std::vector<std::vector<OrientedBox>>& boxes,
                     double alpha, double gamma) const;

  const DetectorConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  static constexpr double kMaskStride = 4.0;

 private:
  DetectorConfig cfg_;
  ParamStore params_;
  std::unique_ptr<Backbone> backbone_;
  std::unique_ptr<Cssp> cssp_;
  std::vector<Sacf> sacf_;  // index 0 fuses F_hat_5 into level 4
  std::unique_ptr<ObjectMask> mask_;
  std::vector<Cafr> cafr_;  // index 0 refines level 3
  std::unique_ptr<DetectHead> head_;
};

}  // namespace ossdet::model
