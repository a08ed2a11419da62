#include "ossdet/model/detector.hpp"

namespace ossdet::model {

using namespace tensor;

Detector::Detector(const DetectorConfig& cfg, std::uint64_t seed) : cfg_(cfg), params_(seed) {
  if (cfg.image_height % 32 != 0 || cfg.image_width % 32 != 0 || cfg.image_height == 0 ||
      cfg.image_width == 0) {
    throw std::invalid_argument("image size must be a positive multiple of 32");
  }
  cfg_.head.channels = cfg.channels;
  cfg_.head.num_classes = cfg.num_classes;
  const std::size_t c = cfg.channels;
  backbone_ = std::make_unique<Backbone>(params_, BackboneConfig{cfg.in_bands, c, cfg.widths});
  cssp_ = std::make_unique<Cssp>(
      params_, CsspConfig{c, cfg.image_height / 32, cfg.image_width / 32, cfg.cssp_fusion, 1e-8});
  for (int l = 4; l >= 2; --l) {
    sacf_.emplace_back(params_, SacfConfig{c, cfg.sfa_k, 1e-8}, "sacf" + std::to_string(l));
  }
  mask_ = std::make_unique<ObjectMask>(params_, c);
  for (int l = 3; l <= 5; ++l) {
    cafr_.emplace_back(params_, CafrConfig{c, cfg.cafr_axis}, "cafr" + std::to_string(l));
  }
  head_ = std::make_unique<DetectHead>(params_, cfg_.head);
}

ForwardResult Detector::forward(const Tensor& x) const {
  const Shape& s = x.shape();
  if (s.h != cfg_.image_height || s.w != cfg_.image_width) {
    throw ShapeError("detector built for " + std::to_string(cfg_.image_height) + "x" +
                     std::to_string(cfg_.image_width) + " input, got " + s.str());
  }
  ForwardResult r;
  r.pyramid = backbone_->forward(x);
  const auto& f = r.pyramid.levels;
  std::array<Tensor, 4> hat;  // F_hat_2..F_hat_5
  hat[3] = cssp_->forward(f[4]);
  for (int i = 2; i >= 0; --i) hat[i] = sacf_[2 - i].forward(hat[i + 1], f[i + 1]);
  r.mask = mask_->predict(hat[0]);
  r.refined[0] = apply_mask(hat[0], r.mask);
  for (std::size_t i = 1; i < 4; ++i) r.refined[i] = cafr_[i - 1].forward(hat[i], r.refined[i - 1]);
  r.head = head_->forward(r.refined);
  return r;
}

LossBreakdown Detector::loss(const ForwardResult& out, const std::vector<std::vector<OrientedBox>>& boxes,
                             double alpha, double gamma) const {
  const Shape ms = out.mask.shape();
  if (boxes.size() != ms.n) throw std::invalid_argument("one box list per batch item");
  std::vector<double> m_g(ms.numel());
  for (std::size_t n = 0; n < ms.n; ++n) {
    auto m = data::rasterize_gt_mask(boxes[n], ms.h, ms.w, kMaskStride);
    std::copy(m.values.begin(), m.values.end(), m_g.begin() + n * ms.plane());
  }
  std::vector<std::array<std::size_t, 2>> grids;
  for (const auto& lv : out.head) grids.push_back({lv.cls.shape().h, lv.cls.shape().w});
  auto targets = assign_targets(boxes, grids, cfg_.head);
  DetectionLoss det = detection_loss(out.head, targets, cfg_.head);
  ActivationLoss act = activation_loss(out.mask, m_g, gamma);
  LossBreakdown lb;
  lb.det = det.total;
  lb.act = act.l_act;
  lb.l_i = act.l_i;
  lb.l_d = act.l_d;
  lb.total = total_loss(det.total, act.l_act, alpha);
  lb.positives = det.positives;
  return lb;
}

}  // namespace ossdet::model
