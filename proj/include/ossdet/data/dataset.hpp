#pragma once

// On-disk layout of a dataset directory:
//   manifest.json          bands, band centres, class names, image size,
//                          per-scene seed and tags, train/test split
//   images/<id>.msic       "MSIC", u16 version, u32 b, H, W (little endian),
//                          then b*H*W float32 values, band-major
//   labels/<id>.txt        one instance per line:
//                          x1 y1 x2 y2 x3 y3 x4 y4 class_name difficulty

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ossdet/data/scene.hpp"

namespace ossdet::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Manifest {
  std::vector<double> band_centers;
  std::vector<std::string> classes;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::string> train;
  std::vector<std::string> test;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

struct Dataset {
  Manifest manifest;
  std::vector<Scene> scenes;  // in manifest order: train ids, then test ids

  const Scene& scene(const std::string& id) const;
  std::vector<const Scene*> split(const std::vector<std::string>& ids) const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// First round(n * train_fraction) ids train, the rest test.
void assign_split(Manifest& manifest, const std::vector<std::string>& ids, double train_fraction);

void write_raster(const std::filesystem::path& path, const MSICube& cube);
MSICube read_raster(const std::filesystem::path& path);

std::string format_annotation(const SceneAnnotation& ann, const std::vector<std::string>& classes);
/// `source` names the file in error messages.
std::vector<geom::OrientedBox> parse_annotation(const std::string& text,
                                                const std::vector<std::string>& classes,
                                                const std::string& source);

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir);
Manifest read_manifest(const std::filesystem::path& dir);

}  // namespace ossdet::data
