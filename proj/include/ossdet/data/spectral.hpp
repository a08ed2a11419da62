#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ossdet::data {

enum class ShapeKind { rectangle, ellipse };

struct SpectralClass {
  std::string name;
  std::vector<double> reflectance;  // one value per band, in [0, 1]
  double min_length = 0;            // long-edge range in pixels
  double max_length = 0;
  double min_aspect = 1;            // long / short edge
  double max_aspect = 1;
  ShapeKind shape = ShapeKind::rectangle;
};

struct ClassTable {
  std::vector<double> band_centers;  // nm, strictly increasing
  std::vector<SpectralClass> classes;
  std::vector<double> background;    // base ground signature

  std::size_t bands() const { return band_centers.size(); }
  int find(const std::string& name) const;  // -1 when absent
  std::vector<std::string> names() const;
};

/// Eight bands over 420..900 nm and six vehicle/person classes. "car" and
/// "van" share their visible reflectance and size distribution and differ
/// only in the two near-infrared bands.
ClassTable default_class_table();

double spectral_distance(const std::vector<double>& a, const std::vector<double>& b);

/// Smallest pairwise distance between class signatures.
double min_class_separation(const ClassTable& table);

/// Indices of the bands nearest 460, 550 and 640 nm, in that order.
std::vector<std::size_t> rgb_band_indices(const std::vector<double>& band_centers);

}  // namespace ossdet::data
