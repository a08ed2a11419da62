#include "ossdet/data/mask.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ossdet::data {

double box_gaussian(const geom::OrientedBox& box, double x, double y) {
  double c = std::cos(box.theta), s = std::sin(box.theta);
  double dx = x - box.cx, dy = y - box.cy;
  double u = dx * c + dy * s;
  double v = -dx * s + dy * c;
  if (std::abs(u) > box.w / 2 || std::abs(v) > box.h / 2) return 0.0;
  double su = box.w / 6, sv = box.h / 6;
  return std::exp(-0.5 * (u * u / (su * su) + v * v / (sv * sv)));
}

ActivationMask rasterize_gt_mask(std::span<const geom::OrientedBox> boxes, std::size_t grid_h,
                                 std::size_t grid_w, double stride) {
  if (!(stride > 0)) throw std::invalid_argument("mask stride must be positive");
  ActivationMask m{grid_h, grid_w, std::vector<double>(grid_h * grid_w, 0.0)};
  for (const auto& b : boxes) {
    double reach = 0.5 * std::hypot(b.w, b.h);
    long c0 = std::max(0L, static_cast<long>(std::floor((b.cx - reach) / stride)));
    long c1 = std::min<long>(grid_w - 1, static_cast<long>(std::floor((b.cx + reach) / stride)));
    long r0 = std::max(0L, static_cast<long>(std::floor((b.cy - reach) / stride)));
    long r1 = std::min<long>(grid_h - 1, static_cast<long>(std::floor((b.cy + reach) / stride)));
    for (long r = r0; r <= r1; ++r) {
      for (long c = c0; c <= c1; ++c) {
        double g = box_gaussian(b, (c + 0.5) * stride, (r + 0.5) * stride);
        double& cell = m.values[r * grid_w + c];
        cell = std::max(cell, g);
      }
    }
  }
  return m;
}

void write_pgm(const std::filesystem::path& path, std::span<const double> values, std::size_t height,
               std::size_t width) {
  if (values.size() != height * width) throw std::invalid_argument("PGM size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << width << " " << height << "\n255\n";
  std::vector<unsigned char> bytes(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(values[i], 0.0, 1.0) * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace ossdet::data
