#include "ossdet/data/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "ossdet/util/svg.hpp"

namespace ossdet::data {

Histogram Histogram::with_edges(std::vector<double> edges) {
  Histogram h;
  h.counts.assign(edges.size(), 0);
  h.edges = std::move(edges);
  return h;
}

std::size_t Histogram::bin_of(double v) const {
  auto it = std::upper_bound(edges.begin(), edges.end(), v);
  return it == edges.begin() ? 0 : static_cast<std::size_t>(it - edges.begin()) - 1;
}

void Histogram::add(double v) { ++counts[bin_of(v)]; }

std::vector<std::string> Histogram::labels() const {
  std::vector<std::string> out;
  char buf[64];
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (i + 1 < edges.size()) {
      std::snprintf(buf, sizeof buf, "[%g,%g)", edges[i], edges[i + 1]);
    } else {
      std::snprintf(buf, sizeof buf, ">=%g", edges[i]);
    }
    out.push_back(buf);
  }
  return out;
}

StatsReport compute_stats(const Dataset& ds) {
  StatsReport r;
  r.classes = ds.manifest.classes;
  r.class_counts.assign(r.classes.size(), 0);
  r.instances_per_image = Histogram::with_edges({0, 1, 2, 4, 8, 12, 16, 20, 24, 32});
  r.area_fraction = Histogram::with_edges({0, 0.001, 0.0025, 0.005, 0.01, 0.025, 0.05, 0.1});
  r.absolute_size = Histogram::with_edges({0, 8, 16, 32, 64, 128});
  std::size_t below = 0;
  for (const auto& s : ds.scenes) {
    ++r.images;
    r.instances_per_image.add(double(s.annotation.boxes.size()));
    double image_area = double(s.cube.height * s.cube.width);
    for (const auto& b : s.annotation.boxes) {
      ++r.instances;
      if (b.class_id >= 0 && std::size_t(b.class_id) < r.class_counts.size()) ++r.class_counts[b.class_id];
      double area = b.w * b.h;
      double frac = image_area > 0 ? area / image_area : 0;
      r.area_fraction.add(frac);
      r.absolute_size.add(std::sqrt(area));
      if (frac < 0.01) ++below;
    }
  }
  r.fraction_below_one_percent = r.instances ? double(below) / double(r.instances) : 0.0;
  return r;
}

void write_stats(const StatsReport& r, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto hist_json = [](const Histogram& h) {
    return nlohmann::json{{"edges", h.edges}, {"counts", h.counts}};
  };
  nlohmann::json j = {{"images", r.images},
                      {"instances", r.instances},
                      {"classes", r.classes},
                      {"class_counts", r.class_counts},
                      {"instances_per_image", hist_json(r.instances_per_image)},
                      {"area_fraction", hist_json(r.area_fraction)},
                      {"absolute_size", hist_json(r.absolute_size)},
                      {"fraction_below_one_percent", r.fraction_below_one_percent}};
  util::write_file(out_dir / "stats.json", j.dump(2) + "\n");
  auto as_double = [](const std::vector<std::size_t>& v) {
    return std::vector<double>(v.begin(), v.end());
  };
  util::write_file(out_dir / "class_counts.svg",
                   util::svg_bar_chart("Instances per category", r.classes, as_double(r.class_counts)));
  util::write_file(out_dir / "instances_per_image.svg",
                   util::svg_bar_chart("Instances per image", r.instances_per_image.labels(),
                                       as_double(r.instances_per_image.counts)));
  util::write_file(out_dir / "area_fraction.svg",
                   util::svg_bar_chart("Relative size (box area / image area)",
                                       r.area_fraction.labels(), as_double(r.area_fraction.counts)));
  util::write_file(out_dir / "absolute_size.svg",
                   util::svg_bar_chart("Absolute size (sqrt area, px)", r.absolute_size.labels(),
                                       as_double(r.absolute_size.counts)));
}

StatsReport dataset_stats(const std::filesystem::path& dir, const std::filesystem::path& out_dir) {
  StatsReport r = compute_stats(read_dataset(dir));
  write_stats(r, out_dir);
  return r;
}

}  // namespace ossdet::data
