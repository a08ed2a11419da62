#include "ossdet/data/spectral.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ossdet::data {

int ClassTable::find(const std::string& name) const {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<std::string> ClassTable::names() const {
  std::vector<std::string> out;
  for (const auto& c : classes) out.push_back(c.name);
  return out;
}

ClassTable default_class_table() {
  ClassTable t;
  t.band_centers = {420, 460, 500, 550, 600, 640, 750, 900};
  using S = ShapeKind;
  t.classes = {
      {"car", {0.20, 0.22, 0.25, 0.30, 0.35, 0.38, 0.30, 0.28}, 12, 18, 1.8, 2.2, S::rectangle},
      {"van", {0.20, 0.22, 0.25, 0.30, 0.35, 0.38, 0.62, 0.70}, 12, 18, 1.8, 2.2, S::rectangle},
      {"truck", {0.55, 0.50, 0.42, 0.35, 0.30, 0.28, 0.40, 0.45}, 20, 30, 2.2, 3.0, S::rectangle},
      {"bus", {0.30, 0.45, 0.60, 0.65, 0.55, 0.40, 0.35, 0.30}, 26, 36, 2.8, 3.6, S::rectangle},
      {"tricycle", {0.70, 0.62, 0.50, 0.40, 0.55, 0.70, 0.75, 0.78}, 8, 11, 1.3, 1.6, S::ellipse},
      {"pedestrian", {0.45, 0.35, 0.30, 0.45, 0.60, 0.72, 0.50, 0.40}, 6, 8, 1.0, 1.3, S::ellipse},
  };
  t.background = {0.10, 0.11, 0.12, 0.13, 0.14, 0.15, 0.45, 0.52};
  return t;
}

double spectral_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("signature band counts differ");
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

double min_class_separation(const ClassTable& table) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < table.classes.size(); ++i) {
    for (std::size_t j = i + 1; j < table.classes.size(); ++j) {
      best = std::min(best, spectral_distance(table.classes[i].reflectance,
                                              table.classes[j].reflectance));
    }
  }
  return best;
}

std::vector<std::size_t> rgb_band_indices(const std::vector<double>& band_centers) {
  if (band_centers.empty()) throw std::invalid_argument("no bands to select from");
  std::vector<std::size_t> out;
  for (double target : {460.0, 550.0, 640.0}) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < band_centers.size(); ++i) {
      if (std::abs(band_centers[i] - target) < std::abs(band_centers[best] - target)) best = i;
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace ossdet::data
