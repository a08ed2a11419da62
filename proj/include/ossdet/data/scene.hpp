#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ossdet/data/spectral.hpp"
#include "ossdet/geometry/obb.hpp"

namespace ossdet::data {

/// Band-major reflectance raster (b, H, W), values in [0, 1].
struct MSICube {
  std::size_t bands = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;
  std::string scene_id;
  std::uint64_t rng_seed = 0;

  float at(std::size_t b, std::size_t y, std::size_t x) const {
    return data[(b * height + y) * width + x];
  }
  friend bool operator==(const MSICube&, const MSICube&) = default;
};

enum class Attribute {
  small,
  occlusion,
  low_illumination,
  truncation,
  dense,
  clutter,
  scale_variation,
  blur,
};

std::string_view attribute_name(Attribute a);
Attribute parse_attribute(std::string_view name);

struct SceneAnnotation {
  std::vector<geom::OrientedBox> boxes;
  std::set<Attribute> attributes;
  friend bool operator==(const SceneAnnotation&, const SceneAnnotation&) = default;
};

struct Scene {
  MSICube cube;
  SceneAnnotation annotation;
  friend bool operator==(const Scene&, const Scene&) = default;
};

struct GenConfig {
  std::size_t height = 256;
  std::size_t width = 256;
  std::size_t min_instances = 1;
  std::size_t max_instances = 24;
  double noise_sigma = 0.01;
  double clutter_density = 0.1;  // expected fraction of the image covered by clutter
  double clutter_min_size = 4;
  double clutter_max_size = 20;
  double illumination = 1.0;     // global reflectance scale
  double blur_sigma = 0.0;       // Gaussian blur in pixels; 0 disables
  double truncation_prob = 0.05;
  double size_scale = 1.0;       // multiplies every class length range
  double max_overlap = 0.1;      // rotated IoU bound between any two instances
  std::size_t max_attempts = 1000;
  double signature_separation = 0.4;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PlacedObject {
  geom::OrientedBox box;
  ShapeKind shape = ShapeKind::rectangle;
  bool truncated = false;
};

/// Renders background, clutter and the given objects. Objects are drawn in
/// order, later ones on top; box geometry is used as given.
MSICube render_scene(const GenConfig& cfg, const ClassTable& table,
                     std::span<const PlacedObject> objects, std::uint64_t seed);

/// Samples a placement and renders it; fully determined by (cfg, table, seed).
/// Throws GenerationError when an instance cannot be placed within
/// cfg.max_attempts tries.
Scene generate_scene(const GenConfig& cfg, const ClassTable& table, std::uint64_t seed,
                     std::string scene_id = "scene");

/// Challenge tags implied by the configuration and the placed objects.
std::set<Attribute> derive_attributes(const GenConfig& cfg, std::span<const PlacedObject> objects,
                                      std::size_t clutter_patches);

/// Per-scene seed derived from a base seed and an index (splitmix64).
std::uint64_t scene_seed(std::uint64_t base, std::uint64_t index);

/// Copy of the cube restricted to the given band indices, in that order.
MSICube select_bands(const MSICube& cube, std::span<const std::size_t> bands);

}  // namespace ossdet::data
