#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ossdet/geometry/obb.hpp"

namespace ossdet::eval {

using geom::OrientedBox;

/// Detections (scored) and ground truth of one image, already filtered to a
/// single class.
struct ImageBoxes {
  std::vector<OrientedBox> dets;
  std::vector<OrientedBox> gts;
};

struct PrCurve {
  std::vector<double> recall;
  std::vector<double> precision;
};

struct ApResult {
  double ap = 0.0;
  std::size_t num_gt = 0;
  std::size_t num_det = 0;
  PrCurve curve;
};

/// Greedy matching in descending score (ties by position in the flattened
/// input); each detection takes the unmatched GT of its image with the highest
/// IoU, and is a true positive when that IoU >= iou_thresh. AP is the mean of
/// the interpolated precision at recall i/100, i = 0..100. No ground truth
/// gives AP 0.
ApResult match_and_ap(std::span<const ImageBoxes> images, double iou_thresh);

struct EvalResult {
  std::vector<std::string> classes;
  std::vector<double> thresholds;              // 0.50, 0.55, ..., 0.95
  std::vector<std::vector<double>> ap;         // [class][threshold]
  std::vector<bool> has_gt;                    // classes without GT are left out of means
  std::vector<PrCurve> curves50;               // per class at IoU 0.5
  double map50 = 0.0;
  double map75 = 0.0;
  double map = 0.0;
};

std::vector<double> coco_thresholds();

/// Per-class AP over the COCO thresholds. Rejects class ids outside the
/// vocabulary in either detections or ground truth.
EvalResult evaluate(std::span<const std::vector<OrientedBox>> dets_by_image,
                    std::span<const std::vector<OrientedBox>> gts_by_image,
                    const std::vector<std::string>& classes);

std::string format_report(const EvalResult& r);
/// metrics.json plus pr_<class>.svg for every class with ground truth.
void write_report(const EvalResult& r, const std::filesystem::path& dir);

}  // namespace ossdet::eval
