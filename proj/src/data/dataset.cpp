#include "ossdet/data/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace ossdet::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'M', 'S', 'I', 'C'};
constexpr std::uint16_t kRasterVersion = 1;
constexpr double kMinEdge = 1e-6;

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const fs::path& path) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw DataError(path.string() + ": truncated raster");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
    throw DataError("cannot write " + path.string());
  }
}

}  // namespace

const Scene& Dataset::scene(const std::string& id) const {
  for (const auto& s : scenes) {
    if (s.cube.scene_id == id) return s;
  }
  throw DataError("scene '" + id + "' not in dataset");
}

std::vector<const Scene*> Dataset::split(const std::vector<std::string>& ids) const {
  std::vector<const Scene*> out;
  for (const auto& id : ids) out.push_back(&scene(id));
  return out;
}

void assign_split(Manifest& manifest, const std::vector<std::string>& ids, double train_fraction) {
  auto n_train = static_cast<std::size_t>(std::llround(double(ids.size()) * train_fraction));
  n_train = std::min(n_train, ids.size());
  manifest.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  manifest.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
}

void write_raster(const fs::path& path, const MSICube& cube) {
  if (cube.data.size() != cube.bands * cube.height * cube.width) {
    throw DataError("raster size does not match its shape for " + cube.scene_id);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic, 4);
  put_le<std::uint16_t>(out, kRasterVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cube.bands));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cube.height));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cube.width));
  for (float v : cube.data) put_le<float>(out, v);
  if (!out) throw DataError("write failed for " + path.string());
}

MSICube read_raster(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(path.string() + ": not an MSIC raster");
  }
  auto version = get_le<std::uint16_t>(in, path);
  if (version != kRasterVersion) {
    throw DataError(path.string() + ": unsupported raster version " + std::to_string(version));
  }
  MSICube cube;
  cube.bands = get_le<std::uint32_t>(in, path);
  cube.height = get_le<std::uint32_t>(in, path);
  cube.width = get_le<std::uint32_t>(in, path);
  cube.data.resize(cube.bands * cube.height * cube.width);
  for (float& v : cube.data) v = get_le<float>(in, path);
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(path.string() + ": trailing bytes");
  return cube;
}

std::string format_annotation(const SceneAnnotation& ann, const std::vector<std::string>& classes) {
  std::string out;
  char buf[64];
  for (const auto& box : ann.boxes) {
    if (box.class_id < 0 || std::size_t(box.class_id) >= classes.size()) {
      throw DataError("box class id " + std::to_string(box.class_id) + " outside the vocabulary");
    }
    for (const auto& p : geom::corners(box)) {
      std::snprintf(buf, sizeof buf, "%.2f %.2f ", p.x, p.y);
      out += buf;
    }
    out += classes[box.class_id];
    out += " 0\n";
  }
  return out;
}

std::vector<geom::OrientedBox> parse_annotation(const std::string& text,
                                                const std::vector<std::string>& classes,
                                                const std::string& source) {
  std::vector<geom::OrientedBox> boxes;
  std::istringstream lines(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(lines, line); ++lineno) {
    auto fail = [&](const std::string& why) {
      return DataError(source + ":" + std::to_string(lineno) + ": " + why);
    };
    std::istringstream fields(line);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok.size() != 10) throw fail("expected 10 fields, found " + std::to_string(tok.size()));
    std::array<geom::Point, 4> pts;
    for (int i = 0; i < 8; ++i) {
      double v = 0;
      const std::string& t = tok[i];
      auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
      if (ec != std::errc() || end != t.data() + t.size() || !std::isfinite(v)) {
        throw fail("bad coordinate '" + t + "'");
      }
      (i % 2 == 0 ? pts[i / 2].x : pts[i / 2].y) = v;
    }
    auto it = std::find(classes.begin(), classes.end(), tok[8]);
    if (it == classes.end()) throw fail("unknown class '" + tok[8] + "'");
    int difficulty = 0;
    auto [dend, dec] = std::from_chars(tok[9].data(), tok[9].data() + tok[9].size(), difficulty);
    if (dec != std::errc() || dend != tok[9].data() + tok[9].size()) {
      throw fail("bad difficulty '" + tok[9] + "'");
    }
    geom::Polygon poly(pts.begin(), pts.end());
    if (geom::signed_area(poly) <= 0) throw fail("corners are not in positive order");
    geom::OrientedBox box = geom::from_corners(pts);
    if (!(box.w > kMinEdge) || !(box.h > kMinEdge)) throw fail("box has non-positive width or height");
    box.class_id = static_cast<int>(it - classes.begin());
    boxes.push_back(box);
  }
  return boxes;
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "labels");
  json scenes = json::array();
  for (const auto& s : ds.scenes) {
    if (s.cube.bands != ds.manifest.band_centers.size()) {
      throw DataError("scene " + s.cube.scene_id + " band count differs from the manifest");
    }
    write_raster(dir / "images" / (s.cube.scene_id + ".msic"), s.cube);
    write_text(dir / "labels" / (s.cube.scene_id + ".txt"),
               format_annotation(s.annotation, ds.manifest.classes));
    json tags = json::array();
    for (auto a : s.annotation.attributes) tags.push_back(std::string(attribute_name(a)));
    scenes.push_back({{"id", s.cube.scene_id}, {"seed", s.cube.rng_seed}, {"attributes", tags}});
  }
  const Manifest& m = ds.manifest;
  json j = {{"format", "ossdet-msi"},
            {"version", 1},
            {"bands", m.band_centers.size()},
            {"band_centers", m.band_centers},
            {"classes", m.classes},
            {"height", m.height},
            {"width", m.width},
            {"scenes", scenes},
            {"splits", {{"train", m.train}, {"test", m.test}}}};
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

namespace {

json load_manifest_json(const fs::path& dir) {
  fs::path path = dir / "manifest.json";
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Manifest manifest_from_json(const json& j, const fs::path& dir) {
  try {
    Manifest m;
    m.band_centers = j.at("band_centers").get<std::vector<double>>();
    if (j.at("bands").get<std::size_t>() != m.band_centers.size()) {
      throw DataError("manifest band count disagrees with its band centres");
    }
    for (std::size_t i = 1; i < m.band_centers.size(); ++i) {
      if (!(m.band_centers[i] > m.band_centers[i - 1])) {
        throw DataError("band centres must be strictly increasing");
      }
    }
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.height = j.at("height").get<std::size_t>();
    m.width = j.at("width").get<std::size_t>();
    m.train = j.at("splits").at("train").get<std::vector<std::string>>();
    m.test = j.at("splits").at("test").get<std::vector<std::string>>();
    return m;
  } catch (const json::exception& e) {
    throw DataError((dir / "manifest.json").string() + ": " + e.what());
  }
}

}  // namespace

Manifest read_manifest(const fs::path& dir) { return manifest_from_json(load_manifest_json(dir), dir); }

Dataset read_dataset(const fs::path& dir) {
  json j = load_manifest_json(dir);
  Dataset ds;
  ds.manifest = manifest_from_json(j, dir);
  std::size_t bands = ds.manifest.band_centers.size();
  try {
    for (const auto& entry : j.at("scenes")) {
      Scene s;
      std::string id = entry.at("id").get<std::string>();
      fs::path raster = dir / "images" / (id + ".msic");
      s.cube = read_raster(raster);
      if (s.cube.bands != bands) {
        throw DataError(raster.string() + ": raster has " + std::to_string(s.cube.bands) +
                        " bands but the manifest declares " + std::to_string(bands));
      }
      if (s.cube.height != ds.manifest.height || s.cube.width != ds.manifest.width) {
        throw DataError(raster.string() + ": raster size differs from the manifest");
      }
      s.cube.scene_id = id;
      s.cube.rng_seed = entry.at("seed").get<std::uint64_t>();
      for (const auto& tag : entry.at("attributes")) {
        s.annotation.attributes.insert(parse_attribute(tag.get<std::string>()));
      }
      fs::path label = dir / "labels" / (id + ".txt");
      s.annotation.boxes = parse_annotation(read_text(label), ds.manifest.classes, label.string());
      ds.scenes.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw DataError((dir / "manifest.json").string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError((dir / "manifest.json").string() + ": " + e.what());
  }
  return ds;
}

}  // namespace ossdet::data
