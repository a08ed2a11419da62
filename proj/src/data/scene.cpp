#include "ossdet/data/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>

namespace ossdet::data {

namespace {

using geom::OrientedBox;
using geom::Point;

constexpr std::array<std::string_view, 8> kAttributeNames = {
    "small", "occlusion", "low_illumination", "truncation",
    "dense", "clutter",   "scale_variation",  "blur"};

constexpr double kSmallAreaFraction = 0.001;
constexpr std::size_t kDenseCount = 16;
constexpr double kScaleVariationRatio = 3.0;
constexpr double kHeavyClutter = 0.2;
constexpr double kLowIllumination = 0.6;
constexpr double kVisibleBlur = 0.5;

// Pixel (x, y) is sampled at its centre (x + 0.5, y + 0.5).
bool covers(const OrientedBox& box, ShapeKind shape, double px, double py) {
  double c = std::cos(box.theta), s = std::sin(box.theta);
  double dx = px - box.cx, dy = py - box.cy;
  double u = dx * c + dy * s;
  double v = -dx * s + dy * c;
  double a = box.w / 2, b = box.h / 2;
  if (shape == ShapeKind::ellipse) return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
  return std::abs(u) <= a && std::abs(v) <= b;
}

void fill(std::vector<double>& img, std::size_t bands, std::size_t h, std::size_t w,
          const OrientedBox& box, ShapeKind shape, const std::vector<double>& sig) {
  double reach = 0.5 * std::hypot(box.w, box.h) + 1;
  auto lo = [](double v) { return static_cast<long>(std::floor(v)); };
  long x0 = std::max(0L, lo(box.cx - reach)), x1 = std::min<long>(w - 1, lo(box.cx + reach));
  long y0 = std::max(0L, lo(box.cy - reach)), y1 = std::min<long>(h - 1, lo(box.cy + reach));
  for (long y = y0; y <= y1; ++y) {
    for (long x = x0; x <= x1; ++x) {
      if (!covers(box, shape, x + 0.5, y + 0.5)) continue;
      for (std::size_t b = 0; b < bands; ++b) img[(b * h + y) * w + x] = sig[b];
    }
  }
}

void gaussian_blur(std::vector<double>& img, std::size_t bands, std::size_t h, std::size_t w,
                   double sigma) {
  int r = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(2 * r + 1);
  double total = 0;
  for (int i = -r; i <= r; ++i) total += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= total;
  std::vector<double> tmp(h * w);
  auto clampi = [](long v, long n) { return std::clamp(v, 0L, n - 1); };
  for (std::size_t b = 0; b < bands; ++b) {
    double* p = img.data() + b * h * w;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * p[y * w + clampi(long(x) + i, long(w))];
        tmp[y * w + x] = acc;
      }
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp[clampi(long(y) + i, long(h)) * w + x];
        p[y * w + x] = acc;
      }
  }
}

std::vector<double> clutter_signature(const ClassTable& table, double min_distance,
                                      std::mt19937_64& rng, std::size_t attempts) {
  std::uniform_real_distribution<double> u(0.05, 0.9);
  for (std::size_t t = 0; t < attempts; ++t) {
    std::vector<double> sig(table.bands());
    for (double& v : sig) v = u(rng);
    bool ok = true;
    for (const auto& c : table.classes) ok = ok && spectral_distance(sig, c.reflectance) >= min_distance;
    if (ok) return sig;
  }
  throw GenerationError("no clutter signature sufficiently distinct from the class table");
}

struct Rendered {
  MSICube cube;
  std::size_t clutter_patches = 0;
};

Rendered render(const GenConfig& cfg, const ClassTable& table, std::span<const PlacedObject> objects,
                std::uint64_t seed) {
  const std::size_t nb = table.bands(), h = cfg.height, w = cfg.width;
  if (table.background.size() != nb) throw std::invalid_argument("background band count mismatch");
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<double> img(nb * h * w);
  for (std::size_t b = 0; b < nb; ++b)
    std::fill_n(img.begin() + b * h * w, h * w, table.background[b]);

  Rendered out;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double target = cfg.clutter_density * double(h * w);
  double covered = 0;
  while (covered < target) {
    double len = cfg.clutter_min_size + u01(rng) * (cfg.clutter_max_size - cfg.clutter_min_size);
    double aspect = 1.0 + 1.5 * u01(rng);
    OrientedBox patch = OrientedBox::make(u01(rng) * w, u01(rng) * h, len, len / aspect,
                                          (u01(rng) - 0.5) * std::numbers::pi);
    ShapeKind shape = u01(rng) < 0.5 ? ShapeKind::rectangle : ShapeKind::ellipse;
    auto sig = clutter_signature(table, cfg.signature_separation / 2, rng, cfg.max_attempts);
    fill(img, nb, h, w, patch, shape, sig);
    covered += patch.w * patch.h;
    ++out.clutter_patches;
  }

  for (const PlacedObject& o : objects) {
    if (o.box.class_id < 0 || std::size_t(o.box.class_id) >= table.classes.size())
      throw std::invalid_argument("object class id out of range");
    fill(img, nb, h, w, o.box, o.shape, table.classes[o.box.class_id].reflectance);
  }

  if (cfg.blur_sigma > 0) gaussian_blur(img, nb, h, w, cfg.blur_sigma);

  std::normal_distribution<double> noise(0.0, 1.0);
  out.cube.bands = nb;
  out.cube.height = h;
  out.cube.width = w;
  out.cube.rng_seed = seed;
  out.cube.data.resize(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    double v = img[i] * cfg.illumination;
    if (cfg.noise_sigma > 0) v += cfg.noise_sigma * noise(rng);
    out.cube.data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

std::optional<PlacedObject> sample_truncated(const GenConfig& cfg, const SpectralClass& cls,
                                             int class_id, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double len = cfg.size_scale * (cls.min_length + u01(rng) * (cls.max_length - cls.min_length));
  double aspect = cls.min_aspect + u01(rng) * (cls.max_aspect - cls.min_aspect);
  bool vertical = u01(rng) < 0.5;
  double bw = vertical ? len / aspect : len, bh = vertical ? len : len / aspect;
  double W = double(cfg.width), H = double(cfg.height);
  double cut = 0.2 + 0.3 * u01(rng);  // fraction left outside the image
  int edge = static_cast<int>(u01(rng) * 4) % 4;
  double cx = bw / 2 + u01(rng) * std::max(0.0, W - bw);
  double cy = bh / 2 + u01(rng) * std::max(0.0, H - bh);
  switch (edge) {
    case 0: cx = bw / 2 - cut * bw; break;
    case 1: cx = W - bw / 2 + cut * bw; break;
    case 2: cy = bh / 2 - cut * bh; break;
    default: cy = H - bh / 2 + cut * bh; break;
  }
  double x0 = std::max(0.0, cx - bw / 2), x1 = std::min(W, cx + bw / 2);
  double y0 = std::max(0.0, cy - bh / 2), y1 = std::min(H, cy + bh / 2);
  if (x1 - x0 < 2 || y1 - y0 < 2) return std::nullopt;
  PlacedObject o;
  o.box = geom::snap_to_centi(
      OrientedBox::make((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0, 0.0, class_id));
  o.shape = ShapeKind::rectangle;
  o.truncated = true;
  return o;
}

PlacedObject sample_inside(const GenConfig& cfg, const SpectralClass& cls, int class_id,
                           std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double len = cfg.size_scale * (cls.min_length + u01(rng) * (cls.max_length - cls.min_length));
  double aspect = cls.min_aspect + u01(rng) * (cls.max_aspect - cls.min_aspect);
  double theta = (u01(rng) - 0.5) * std::numbers::pi;
  double margin = 0.5 * std::hypot(len, len / aspect) + 0.5;
  double W = double(cfg.width), H = double(cfg.height);
  if (2 * margin >= W || 2 * margin >= H) throw GenerationError("object larger than the image");
  double cx = margin + u01(rng) * (W - 2 * margin);
  double cy = margin + u01(rng) * (H - 2 * margin);
  PlacedObject o;
  o.box = geom::snap_to_centi(OrientedBox::make(cx, cy, len, len / aspect, theta, class_id));
  o.shape = cls.shape;
  return o;
}

}  // namespace

std::string_view attribute_name(Attribute a) { return kAttributeNames[static_cast<int>(a)]; }

Attribute parse_attribute(std::string_view name) {
  for (std::size_t i = 0; i < kAttributeNames.size(); ++i) {
    if (kAttributeNames[i] == name) return static_cast<Attribute>(i);
  }
  throw std::invalid_argument("unknown attribute tag '" + std::string(name) + "'");
}

std::uint64_t scene_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

MSICube render_scene(const GenConfig& cfg, const ClassTable& table,
                     std::span<const PlacedObject> objects, std::uint64_t seed) {
  return render(cfg, table, objects, seed).cube;
}

std::set<Attribute> derive_attributes(const GenConfig& cfg, std::span<const PlacedObject> objects,
                                      std::size_t clutter_patches) {
  std::set<Attribute> tags;
  double image_area = double(cfg.width * cfg.height);
  double lo = std::numeric_limits<double>::infinity(), hi = 0;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& b = objects[i].box;
    double a = b.w * b.h;
    if (a < kSmallAreaFraction * image_area) tags.insert(Attribute::small);
    if (objects[i].truncated) tags.insert(Attribute::truncation);
    lo = std::min(lo, std::sqrt(a));
    hi = std::max(hi, std::sqrt(a));
    for (std::size_t j = 0; j < i; ++j) {
      if (geom::rotated_iou(b, objects[j].box) > 0) tags.insert(Attribute::occlusion);
    }
  }
  if (objects.size() >= kDenseCount) tags.insert(Attribute::dense);
  if (!objects.empty() && hi >= kScaleVariationRatio * lo) tags.insert(Attribute::scale_variation);
  if (clutter_patches > 0 && cfg.clutter_density >= kHeavyClutter) tags.insert(Attribute::clutter);
  if (cfg.illumination < kLowIllumination) tags.insert(Attribute::low_illumination);
  if (cfg.blur_sigma >= kVisibleBlur) tags.insert(Attribute::blur);
  return tags;
}

Scene generate_scene(const GenConfig& cfg, const ClassTable& table, std::uint64_t seed,
                     std::string scene_id) {
  if (cfg.min_instances > cfg.max_instances) throw std::invalid_argument("min_instances > max_instances");
  if (table.classes.empty()) throw std::invalid_argument("empty class table");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> count(cfg.min_instances, cfg.max_instances);
  std::uniform_int_distribution<int> pick(0, int(table.classes.size()) - 1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  std::vector<PlacedObject> objects;
  std::size_t n = count(rng);
  for (std::size_t i = 0; i < n; ++i) {
    int cls = pick(rng);
    bool placed = false;
    for (std::size_t attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
      std::optional<PlacedObject> cand;
      if (u01(rng) < cfg.truncation_prob) {
        cand = sample_truncated(cfg, table.classes[cls], cls, rng);
      } else {
        cand = sample_inside(cfg, table.classes[cls], cls, rng);
      }
      if (!cand) continue;
      bool ok = true;
      for (const auto& o : objects) ok = ok && geom::rotated_iou(o.box, cand->box) <= cfg.max_overlap;
      if (ok) {
        objects.push_back(*cand);
        placed = true;
      }
    }
    if (!placed) {
      throw GenerationError("could not place instance " + std::to_string(i) + " of scene '" +
                            scene_id + "' within " + std::to_string(cfg.max_attempts) + " attempts");
    }
  }

  Rendered r = render(cfg, table, objects, seed);
  Scene scene;
  scene.cube = std::move(r.cube);
  scene.cube.scene_id = std::move(scene_id);
  for (const auto& o : objects) scene.annotation.boxes.push_back(o.box);
  scene.annotation.attributes = derive_attributes(cfg, objects, r.clutter_patches);
  return scene;
}

MSICube select_bands(const MSICube& cube, std::span<const std::size_t> bands) {
  MSICube out;
  out.bands = bands.size();
  out.height = cube.height;
  out.width = cube.width;
  out.scene_id = cube.scene_id;
  out.rng_seed = cube.rng_seed;
  std::size_t plane = cube.height * cube.width;
  out.data.resize(bands.size() * plane);
  for (std::size_t i = 0; i < bands.size(); ++i) {
    if (bands[i] >= cube.bands) throw std::out_of_range("band index out of range");
    std::copy_n(cube.data.begin() + bands[i] * plane, plane, out.data.begin() + i * plane);
  }
  return out;
}

}  // namespace ossdet::data
