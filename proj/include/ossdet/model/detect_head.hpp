#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ossdet/geometry/obb.hpp"
#include "ossdet/model/params.hpp"

namespace ossdet::model {

using geom::OrientedBox;

constexpr std::size_t kRegChannels = 6;  // dx, dy, log w, log h, sin 2t, cos 2t

struct HeadConfig {
  std::size_t channels = 32;
  std::size_t num_classes = 6;
  std::array<std::size_t, 4> strides = {4, 8, 16, 32};
  /// Level l takes boxes with sqrt(w h) in [scale_lo[l], scale_lo[l + 1]).
  std::array<double, 4> scale_lo = {0, 16, 32, 64};
  double center_shrink = 0.5;
  double prior = 0.01;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double smooth_l1_beta = 1.0 / 9.0;
};

struct LevelOutput {
  Tensor cls;  // (n, K, H, W) logits
  Tensor reg;  // (n, 6, H, W)
  std::size_t stride = 0;
};

/// Shared across levels: conv3x3 + relu tower, then 3x3 class and box convs.
class DetectHead {
 public:
  DetectHead(ParamStore& ps, const HeadConfig& cfg, const std::string& prefix = "head");
  std::vector<LevelOutput> forward(std::span<const Tensor> levels) const;
  const HeadConfig& config() const { return cfg_; }

  Conv tower, cls, reg;

 private:
  HeadConfig cfg_;
};

/// Regression target of a box relative to the cell centre (cx0, cy0).
std::array<double, kRegChannels> encode_box(const OrientedBox& box, double cx0, double cy0,
                                            double stride);
OrientedBox decode_box(std::span<const double, kRegChannels> t, double cx0, double cy0,
                       double stride);

struct LevelTargets {
  std::size_t height = 0, width = 0, stride = 0;
  std::vector<double> cls;        // (n, K, H, W), 1 on the assigned class
  std::vector<double> reg;        // (n, 6, H, W)
  std::vector<double> positive;   // (n, 1, H, W), 1 on positive cells
  std::vector<int> owner;         // (n, H, W), box index or -1
};

/// A cell is positive for a box when the box scale selects the cell's level and
/// the cell centre lies in the box shrunk by center_shrink; overlaps go to the
/// smaller box. A box that claims no cell falls back to the cell holding its
/// centre, if that cell is free.
std::vector<LevelTargets> assign_targets(const std::vector<std::vector<OrientedBox>>& boxes,
                                         std::span<const std::array<std::size_t, 2>> grids,
                                         const HeadConfig& cfg);

/// Sum over elements of the binary focal loss of sigmoid(logits) vs targets.
Tensor focal_loss_sum(const Tensor& logits, std::span<const double> targets, double alpha,
                      double gamma);
/// Sum of smooth-L1(pred - target) over entries whose cell weight is nonzero;
/// `weight` is (n, 1, H, W) and broadcast over channels.
Tensor smooth_l1_sum(const Tensor& pred, std::span<const double> target,
                     std::span<const double> weight, double beta);

struct DetectionLoss {
  Tensor total;  // (cls + reg) / max(1, positives)
  Tensor cls;
  Tensor reg;
  double positives = 0;
};

DetectionLoss detection_loss(std::span<const LevelOutput> out, std::span<const LevelTargets> targets,
                             const HeadConfig& cfg);

/// L_det + alpha * L_act.
Tensor total_loss(const Tensor& l_det, const Tensor& l_act, double alpha);

struct DecodeOptions {
  double score_thresh = 0.05;
  double iou_thresh = 0.5;
  std::size_t max_candidates = 1000;
};

/// Greedy rotated NMS per class: keeps boxes in descending score (ties by
/// input index) and drops any with IoU > iou_thresh against a kept box.
std::vector<OrientedBox> rotated_nms(std::vector<OrientedBox> boxes, double iou_thresh);

/// Boxes of batch item `n`, scored by sigmoid(logit) per class.
std::vector<OrientedBox> decode_and_nms(std::span<const LevelOutput> out, std::size_t n,
                                        const DecodeOptions& opt);

/// One line per box: x1 y1 ... x4 y4 class_name score.
std::string format_detections(std::span<const OrientedBox> boxes, const std::vector<std::string>& classes);

}  // namespace ossdet::model
