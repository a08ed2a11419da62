#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ossdet/data/dataset.hpp"

namespace ossdet::data {

/// Bin i counts values v with edges[i] <= v < edges[i + 1]; the last bin is
/// open above.
struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;

  static Histogram with_edges(std::vector<double> edges);
  void add(double v);
  std::size_t bin_of(double v) const;
  std::vector<std::string> labels() const;
};

struct StatsReport {
  std::size_t images = 0;
  std::size_t instances = 0;
  std::vector<std::string> classes;
  std::vector<std::size_t> class_counts;
  Histogram instances_per_image;
  Histogram area_fraction;   // box area / image area
  Histogram absolute_size;   // sqrt(box area) in pixels
  double fraction_below_one_percent = 0;  // share of instances under 1% image area
};

StatsReport compute_stats(const Dataset& dataset);

/// Writes stats.json and the SVG plots into out_dir.
void write_stats(const StatsReport& report, const std::filesystem::path& out_dir);

/// read_dataset + compute_stats + write_stats.
StatsReport dataset_stats(const std::filesystem::path& dir, const std::filesystem::path& out_dir);

}  // namespace ossdet::data
