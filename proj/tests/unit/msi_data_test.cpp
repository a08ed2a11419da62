#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <unistd.h>

#include "ossdet/data/dataset.hpp"
#include "ossdet/data/mask.hpp"
#include "ossdet/data/scene.hpp"
#include "ossdet/data/stats.hpp"

using namespace ossdet::data;
using ossdet::geom::OrientedBox;
namespace fs = std::filesystem;

namespace {

GenConfig quiet_config() {
  GenConfig cfg;
  cfg.height = cfg.width = 64;
  cfg.noise_sigma = 0;
  cfg.clutter_density = 0;
  cfg.truncation_prob = 0;
  return cfg;
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("ossdet_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Dataset make_dataset(std::size_t n, const GenConfig& cfg, std::uint64_t seed) {
  ClassTable table = default_class_table();
  Dataset ds;
  ds.manifest.band_centers = table.band_centers;
  ds.manifest.classes = table.names();
  ds.manifest.height = cfg.height;
  ds.manifest.width = cfg.width;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "s%04zu", i);
    ds.scenes.push_back(generate_scene(cfg, table, scene_seed(seed, i), id));
    ids.push_back(id);
  }
  assign_split(ds.manifest, ids, 0.7);
  return ds;
}

}  // namespace

TEST(SpectralTable, DefaultTableIsSeparatedAndOrdered) {
  ClassTable t = default_class_table();
  ASSERT_EQ(t.bands(), 8u);
  for (std::size_t i = 0; i < t.bands(); ++i) {
    EXPECT_GE(t.band_centers[i], 395);
    EXPECT_LE(t.band_centers[i], 950);
    if (i > 0) {
      EXPECT_GT(t.band_centers[i], t.band_centers[i - 1]);
    }
  }
  EXPECT_GE(min_class_separation(t), GenConfig{}.signature_separation);
  for (const auto& c : t.classes) {
    EXPECT_GE(spectral_distance(c.reflectance, t.background), GenConfig{}.signature_separation / 2);
  }
}

TEST(SpectralTable, MetamerPairIsInvisibleInRgbBands) {
  ClassTable t = default_class_table();
  auto rgb = rgb_band_indices(t.band_centers);
  EXPECT_EQ(rgb, (std::vector<std::size_t>{1, 3, 5}));
  const auto& car = t.classes[t.find("car")];
  const auto& van = t.classes[t.find("van")];
  for (auto b : rgb) EXPECT_EQ(car.reflectance[b], van.reflectance[b]);
  EXPECT_GT(spectral_distance(car.reflectance, van.reflectance), 0.4);
  EXPECT_EQ(car.min_length, van.min_length);
  EXPECT_EQ(car.max_length, van.max_length);
  EXPECT_EQ(car.min_aspect, van.min_aspect);
  EXPECT_EQ(car.max_aspect, van.max_aspect);
}

TEST(GenerateScene, ZeroInstancesIsPureBackground) {
  GenConfig cfg = quiet_config();
  cfg.min_instances = cfg.max_instances = 0;
  ClassTable t = default_class_table();
  Scene s = generate_scene(cfg, t, 5);
  EXPECT_TRUE(s.annotation.boxes.empty());
  for (std::size_t b = 0; b < t.bands(); ++b)
    for (std::size_t y = 0; y < cfg.height; ++y)
      for (std::size_t x = 0; x < cfg.width; ++x)
        ASSERT_EQ(s.cube.at(b, y, x), static_cast<float>(t.background[b]));
}

TEST(GenerateScene, SameSeedIsBitIdentical) {
  GenConfig cfg;
  cfg.height = cfg.width = 128;
  cfg.blur_sigma = 0.8;
  cfg.truncation_prob = 0.3;
  ClassTable t = default_class_table();
  Scene a = generate_scene(cfg, t, 42, "x");
  Scene b = generate_scene(cfg, t, 42, "x");
  EXPECT_EQ(a, b);
  Scene c = generate_scene(cfg, t, 43, "x");
  EXPECT_NE(a.cube.data, c.cube.data);
}

TEST(GenerateScene, NoiselessInteriorEqualsSignature) {
  GenConfig cfg = quiet_config();
  ClassTable t = default_class_table();
  PlacedObject obj{OrientedBox::make(32, 32, 20, 10, 0.0, 0)};
  MSICube cube = render_scene(cfg, t, {&obj, 1}, 9);
  for (std::size_t y = 0; y < 64; ++y) {
    for (std::size_t x = 0; x < 64; ++x) {
      bool inside = x + 0.5 > 22 && x + 0.5 < 42 && y + 0.5 > 27 && y + 0.5 < 37;
      for (std::size_t b = 0; b < t.bands(); ++b) {
        const auto& sig = inside ? t.classes[0].reflectance : t.background;
        ASSERT_EQ(cube.at(b, y, x), static_cast<float>(sig[b])) << x << "," << y << " band " << b;
      }
    }
  }
}

TEST(GenerateScene, NoisyInteriorMeanWithinThreeSigma) {
  GenConfig cfg = quiet_config();
  cfg.noise_sigma = 0.02;
  ClassTable t = default_class_table();
  PlacedObject obj{OrientedBox::make(32, 32, 24, 12, 0.4, 3)};
  MSICube cube = render_scene(cfg, t, {&obj, 1}, 17);
  std::vector<double> mean(t.bands(), 0.0);
  std::size_t n = 0;
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t x = 0; x < 64; ++x) {
      if (!ossdet::geom::contains(obj.box, {x + 0.5, y + 0.5})) continue;
      ++n;
      for (std::size_t b = 0; b < t.bands(); ++b) mean[b] += cube.at(b, y, x);
    }
  ASSERT_GT(n, 100u);
  for (std::size_t b = 0; b < t.bands(); ++b) {
    EXPECT_NEAR(mean[b] / n, t.classes[3].reflectance[b], 3 * cfg.noise_sigma / std::sqrt(double(n)));
  }
}

TEST(GenerateScene, CountsBoundsAndTags) {
  GenConfig cfg;
  cfg.height = cfg.width = 256;
  cfg.min_instances = 16;
  cfg.max_instances = 20;
  cfg.illumination = 0.5;
  cfg.blur_sigma = 1.0;
  cfg.clutter_density = 0.3;
  cfg.truncation_prob = 0.0;
  ClassTable t = default_class_table();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Scene s = generate_scene(cfg, t, seed);
    EXPECT_GE(s.annotation.boxes.size(), 16u);
    EXPECT_LE(s.annotation.boxes.size(), 20u);
    for (const auto& b : s.annotation.boxes) {
      for (auto p : ossdet::geom::corners(b)) {
        EXPECT_GE(p.x, 0);
        EXPECT_LE(p.x, 256);
        EXPECT_GE(p.y, 0);
        EXPECT_LE(p.y, 256);
      }
    }
    const auto& tags = s.annotation.attributes;
    EXPECT_TRUE(tags.count(Attribute::dense));
    EXPECT_TRUE(tags.count(Attribute::low_illumination));
    EXPECT_TRUE(tags.count(Attribute::blur));
    EXPECT_TRUE(tags.count(Attribute::clutter));
    EXPECT_FALSE(tags.count(Attribute::truncation));
  }
}

TEST(GenerateScene, TruncatedInstancesAreClippedToTheImage) {
  GenConfig cfg = quiet_config();
  cfg.truncation_prob = 1.0;
  cfg.min_instances = cfg.max_instances = 3;
  Scene s = generate_scene(cfg, default_class_table(), 4);
  EXPECT_TRUE(s.annotation.attributes.count(Attribute::truncation));
  for (const auto& b : s.annotation.boxes) {
    for (auto p : ossdet::geom::corners(b)) {
      EXPECT_GE(p.x, -1e-9);
      EXPECT_LE(p.x, 64 + 1e-9);
    }
  }
}

TEST(GenerateScene, ImpossiblePlacementFails) {
  GenConfig cfg = quiet_config();
  cfg.height = cfg.width = 32;
  cfg.min_instances = cfg.max_instances = 40;
  cfg.max_overlap = 0.0;
  EXPECT_THROW(generate_scene(cfg, default_class_table(), 1), GenerationError);
}

TEST(GtMask, EmptyCentreAndOneSigma) {
  auto empty = rasterize_gt_mask({}, 8, 8, 4);
  for (double v : empty.values) EXPECT_EQ(v, 0.0);

  // Centre on the cell centre (5.5, 3.5) of a stride-4 grid.
  OrientedBox box = OrientedBox::make(22, 14, 24, 12, 0.0);
  auto m = rasterize_gt_mask({&box, 1}, 16, 16, 4);
  EXPECT_DOUBLE_EQ(m.at(3, 5), 1.0);
  EXPECT_NEAR(box_gaussian(box, 22 + 24.0 / 6, 14), std::exp(-0.5), 1e-15);
  EXPECT_EQ(box_gaussian(box, 22 + 12.5, 14), 0.0);
  for (double v : m.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(GtMask, OverlapTakesPixelwiseMax) {
  OrientedBox boxes[2] = {OrientedBox::make(20, 20, 16, 8, 0.3), OrientedBox::make(24, 22, 16, 8, -0.2)};
  auto both = rasterize_gt_mask(boxes, 12, 12, 4);
  auto a = rasterize_gt_mask({&boxes[0], 1}, 12, 12, 4);
  auto b = rasterize_gt_mask({&boxes[1], 1}, 12, 12, 4);
  for (std::size_t i = 0; i < both.values.size(); ++i) {
    EXPECT_EQ(both.values[i], std::max(a.values[i], b.values[i]));
  }
}

TEST(GtMask, TranslationByWholeCellsTranslatesTheMask) {
  OrientedBox box = OrientedBox::make(21.3, 17.9, 18, 7, 0.7);
  OrientedBox moved = box;
  moved.cx += 3 * 4;
  moved.cy += 2 * 4;
  auto m0 = rasterize_gt_mask({&box, 1}, 16, 16, 4);
  auto m1 = rasterize_gt_mask({&moved, 1}, 16, 16, 4);
  for (std::size_t r = 0; r + 2 < 16; ++r)
    for (std::size_t c = 0; c + 3 < 16; ++c) EXPECT_NEAR(m1.at(r + 2, c + 3), m0.at(r, c), 1e-12);
}

TEST(DatasetIo, RoundTripIsExact) {
  GenConfig cfg;
  cfg.height = cfg.width = 64;
  cfg.min_instances = 2;
  cfg.max_instances = 6;
  cfg.truncation_prob = 0.3;
  Dataset ds = make_dataset(5, cfg, 77);
  fs::path dir = fresh_dir("roundtrip");
  write_dataset(dir, ds);
  Dataset back = read_dataset(dir);
  EXPECT_EQ(back.manifest, ds.manifest);
  ASSERT_EQ(back.scenes.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(back.scenes[i].cube, ds.scenes[i].cube);
    EXPECT_EQ(back.scenes[i].annotation, ds.scenes[i].annotation);
  }
  EXPECT_EQ(back, ds);
  fs::remove_all(dir);
}

TEST(DatasetIo, SplitIsSeventyThirty) {
  Manifest m;
  std::vector<std::string> ids = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"};
  assign_split(m, ids, 0.7);
  EXPECT_EQ(m.train.size(), 7u);
  EXPECT_EQ(m.test.size(), 3u);
}

TEST(DatasetIo, RejectsDegenerateBoxWithLocation) {
  std::vector<std::string> classes = {"car"};
  try {
    parse_annotation("0 0 10 0 10 5 0 5 car 0\n0 0 10 0 10 0 0 0 car 0\n", classes, "lab.txt");
    FAIL() << "degenerate box accepted";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("lab.txt:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_annotation("0 0 10 0 10 5 car 0\n", classes, "f"), DataError);
  EXPECT_THROW(parse_annotation("0 0 10 0 10 5 0 5 boat 0\n", classes, "f"), DataError);
  EXPECT_THROW(parse_annotation("0 0 10 0 10 5 0 x car 0\n", classes, "f"), DataError);
}

TEST(DatasetIo, RejectsBandCountMismatch) {
  GenConfig cfg = quiet_config();
  Dataset ds = make_dataset(2, cfg, 3);
  fs::path dir = fresh_dir("bands");
  write_dataset(dir, ds);
  MSICube rgb = select_bands(ds.scenes[0].cube, std::vector<std::size_t>{1, 3, 5});
  write_raster(dir / "images" / (rgb.scene_id + ".msic"), rgb);
  EXPECT_THROW(read_dataset(dir), DataError);
  fs::remove_all(dir);
}

TEST(DatasetIo, RejectsCorruptRaster) {
  fs::path dir = fresh_dir("raster");
  std::ofstream(dir / "x.msic") << "MSIX";
  EXPECT_THROW(read_raster(dir / "x.msic"), DataError);
  fs::remove_all(dir);
}

TEST(Stats, CountsAndBins) {
  Dataset ds;
  ds.manifest.classes = {"car", "van"};
  Scene s;
  s.cube.height = s.cube.width = 100;
  for (int i = 0; i < 3; ++i) s.annotation.boxes.push_back(OrientedBox::make(20 + 20 * i, 50, 10, 10, 0, 0));
  ds.scenes.push_back(s);
  StatsReport r = compute_stats(ds);
  EXPECT_EQ(r.class_counts[0], 3u);
  EXPECT_EQ(r.class_counts[1], 0u);
  EXPECT_EQ(r.instances_per_image.counts[r.instances_per_image.bin_of(3)], 1u);
  std::size_t bin = r.area_fraction.bin_of(0.01);
  EXPECT_EQ(r.area_fraction.edges[bin], 0.01);
  EXPECT_EQ(r.area_fraction.counts[bin], 3u);
  EXPECT_EQ(r.fraction_below_one_percent, 0.0);
}

TEST(Stats, EmptyDatasetHasZeroCounts) {
  Dataset ds;
  ds.manifest.classes = {"car"};
  StatsReport r = compute_stats(ds);
  EXPECT_EQ(r.images, 0u);
  EXPECT_EQ(r.instances, 0u);
  EXPECT_EQ(r.class_counts[0], 0u);
}

TEST(Stats, DefaultConfigIsDominatedBySmallObjects) {
  GenConfig cfg;
  Dataset ds = make_dataset(12, cfg, 2024);
  std::size_t total = 0, small = 0;
  for (const auto& s : ds.scenes) {
    EXPECT_GE(s.annotation.boxes.size(), cfg.min_instances);
    EXPECT_LE(s.annotation.boxes.size(), cfg.max_instances);
    for (const auto& b : s.annotation.boxes) {
      ++total;
      small += b.w * b.h < 0.01 * 256 * 256;
    }
  }
  ASSERT_GT(total, 0u);
  StatsReport r = compute_stats(ds);
  EXPECT_EQ(r.instances, total);
  EXPECT_DOUBLE_EQ(r.fraction_below_one_percent, double(small) / double(total));
  EXPECT_GE(r.fraction_below_one_percent, 0.95);

  fs::path dir = fresh_dir("stats");
  write_stats(r, dir);
  for (const char* f : {"stats.json", "class_counts.svg", "instances_per_image.svg",
                        "area_fraction.svg", "absolute_size.svg"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  fs::remove_all(dir);
}

TEST(Pgm, WritesHeaderAndBytes) {
  fs::path dir = fresh_dir("pgm");
  std::vector<double> v = {0.0, 0.5, 1.0, 2.0};
  write_pgm(dir / "m.pgm", v, 2, 2);
  std::ifstream in(dir / "m.pgm", std::ios::binary);
  std::string magic;
  int w, h, maxv;
  in >> magic >> w >> h >> maxv;
  in.get();
  unsigned char px[4];
  in.read(reinterpret_cast<char*>(px), 4);
  EXPECT_EQ(magic, "P5");
  EXPECT_EQ(px[0], 0);
  EXPECT_EQ(px[1], 128);
  EXPECT_EQ(px[3], 255);
  fs::remove_all(dir);
}
