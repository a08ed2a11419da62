#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "ossdet/geometry/obb.hpp"

namespace ossdet::data {

/// Single-channel map over a feature grid, row-major.
struct ActivationMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
};

/// Rotated Gaussian of one box evaluated at image point (x, y): peak 1 at the
/// centre, sigma (w/6, h/6) along the box axes, and exactly 0 outside the box.
double box_gaussian(const geom::OrientedBox& box, double x, double y);

/// Pixelwise max of the per-box Gaussians sampled at cell centres
/// ((c + 0.5) * stride, (r + 0.5) * stride).
ActivationMask rasterize_gt_mask(std::span<const geom::OrientedBox> boxes, std::size_t grid_h,
                                 std::size_t grid_w, double stride);

/// 8-bit binary PGM (P5); values are clamped to [0, 1] and scaled to 0..255.
void write_pgm(const std::filesystem::path& path, std::span<const double> values, std::size_t height,
               std::size_t width);

}  // namespace ossdet::data
