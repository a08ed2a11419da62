#include "ossdet/eval/map.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "ossdet/util/svg.hpp"

namespace ossdet::eval {

namespace {

constexpr int kRecallPoints = 101;

struct Ref {
  std::size_t image;
  std::size_t index;
  double score;
};

}  // namespace

std::vector<double> coco_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

ApResult match_and_ap(std::span<const ImageBoxes> images, double iou_thresh) {
  ApResult r;
  std::vector<Ref> dets;
  std::vector<std::vector<char>> used(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    r.num_gt += images[i].gts.size();
    used[i].assign(images[i].gts.size(), 0);
    for (std::size_t j = 0; j < images[i].dets.size(); ++j) {
      dets.push_back({i, j, images[i].dets[j].score.value_or(0.0)});
    }
  }
  r.num_det = dets.size();
  std::stable_sort(dets.begin(), dets.end(), [](const Ref& a, const Ref& b) { return a.score > b.score; });

  std::size_t tp = 0;
  for (std::size_t k = 0; k < dets.size(); ++k) {
    const Ref& d = dets[k];
    const auto& gts = images[d.image].gts;
    const OrientedBox& box = images[d.image].dets[d.index];
    double best = -1;
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (used[d.image][j]) continue;
      double iou = geom::rotated_iou(box, gts[j]);
      if (iou > best) {
        best = iou;
        best_j = j;
      }
    }
    if (best >= iou_thresh) {
      used[d.image][best_j] = 1;
      ++tp;
    }
    r.curve.precision.push_back(double(tp) / double(k + 1));
    r.curve.recall.push_back(r.num_gt ? double(tp) / double(r.num_gt) : 0.0);
  }
  if (r.num_gt == 0) return r;

  // Interpolated precision: running max from the right.
  std::vector<double> interp = r.curve.precision;
  for (std::size_t k = interp.size(); k-- > 1;) interp[k - 1] = std::max(interp[k - 1], interp[k]);
  double sum = 0;
  for (int i = 0; i < kRecallPoints; ++i) {
    double level = i / 100.0;
    auto it = std::lower_bound(r.curve.recall.begin(), r.curve.recall.end(), level);
    if (it != r.curve.recall.end()) sum += interp[static_cast<std::size_t>(it - r.curve.recall.begin())];
  }
  r.ap = sum / kRecallPoints;
  return r;
}

EvalResult evaluate(std::span<const std::vector<OrientedBox>> dets_by_image,
                    std::span<const std::vector<OrientedBox>> gts_by_image,
                    const std::vector<std::string>& classes) {
  if (dets_by_image.size() != gts_by_image.size()) {
    throw std::invalid_argument("evaluate: detections for " + std::to_string(dets_by_image.size()) +
                                " images, ground truth for " + std::to_string(gts_by_image.size()));
  }
  const int k = static_cast<int>(classes.size());
  auto check = [k](const std::vector<OrientedBox>& boxes, const char* what) {
    for (const auto& b : boxes) {
      if (b.class_id < 0 || b.class_id >= k) {
        throw std::invalid_argument(std::string("evaluate: ") + what + " class id " +
                                    std::to_string(b.class_id) + " is not in the vocabulary");
      }
    }
  };
  for (const auto& d : dets_by_image) check(d, "detection");
  for (const auto& g : gts_by_image) check(g, "ground-truth");

  EvalResult r;
  r.classes = classes;
  r.thresholds = coco_thresholds();
  r.ap.assign(classes.size(), std::vector<double>(r.thresholds.size(), 0.0));
  r.has_gt.assign(classes.size(), false);
  r.curves50.resize(classes.size());
  std::size_t counted = 0;
  double s50 = 0, s75 = 0, sall = 0;
  for (int c = 0; c < k; ++c) {
    std::vector<ImageBoxes> per(dets_by_image.size());
    std::size_t n_gt = 0;
    for (std::size_t i = 0; i < per.size(); ++i) {
      for (const auto& b : dets_by_image[i]) if (b.class_id == c) per[i].dets.push_back(b);
      for (const auto& b : gts_by_image[i]) if (b.class_id == c) per[i].gts.push_back(b);
      n_gt += per[i].gts.size();
    }
    r.has_gt[c] = n_gt > 0;
    for (std::size_t t = 0; t < r.thresholds.size(); ++t) {
      ApResult ap = match_and_ap(per, r.thresholds[t]);
      r.ap[c][t] = ap.ap;
      if (t == 0) r.curves50[c] = std::move(ap.curve);
    }
    if (!r.has_gt[c]) continue;
    ++counted;
    s50 += r.ap[c][0];
    s75 += r.ap[c][5];
    double row = 0;
    for (double v : r.ap[c]) row += v;
    sall += row / double(r.thresholds.size());
  }
  if (counted) {
    r.map50 = s50 / double(counted);
    r.map75 = s75 / double(counted);
    r.map = sall / double(counted);
  }
  return r;
}

std::string format_report(const EvalResult& r) {
  nlohmann::json per = nlohmann::json::object();
  for (std::size_t c = 0; c < r.classes.size(); ++c) {
    per[r.classes[c]] = {{"has_gt", bool(r.has_gt[c])}, {"ap", r.ap[c]}};
  }
  nlohmann::json j = {{"mAP50", r.map50},    {"mAP75", r.map75}, {"mAP", r.map},
                      {"thresholds", r.thresholds}, {"per_class", per}};
  return j.dump(2) + "\n";
}

void write_report(const EvalResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  util::write_file(dir / "metrics.json", format_report(r));
  for (std::size_t c = 0; c < r.classes.size(); ++c) {
    if (!r.has_gt[c]) continue;
    util::Series s{r.classes[c], r.curves50[c].recall, r.curves50[c].precision};
    char title[128];
    std::snprintf(title, sizeof title, "%s: PR at IoU 0.50 (AP %.3f)", r.classes[c].c_str(), r.ap[c][0]);
    util::write_file(dir / ("pr_" + r.classes[c] + ".svg"),
                     util::svg_line_chart(title, "recall", "precision", {s}));
  }
}

}  // namespace ossdet::eval
