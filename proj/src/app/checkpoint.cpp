#include "ossdet/app/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ossdet::app {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'O', 'S', 'S', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <class T>
  void pod(const T& v) {
    out_.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void u64(std::uint64_t v) { pod(v); }
  void str(const std::string& s) {
    u64(s.size());
    out_ += s;
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    out_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& source) : b_(bytes), source_(source) {}
  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> doubles() {
    const std::uint64_t n = u64();
    if (n > (b_.size() - pos_) / sizeof(double)) fail("array length exceeds file size");
    std::vector<double> v(n);
    std::memcpy(v.data(), b_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  bool done() const { return pos_ == b_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw CheckpointError(source_ + ": " + what + " at byte " + std::to_string(pos_));
  }

 private:
  void need(std::uint64_t n) const {
    if (n > b_.size() - pos_) fail("truncated checkpoint");
  }
  const std::string& b_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize(const Checkpoint& ck) {
  Writer w;
  for (char c : kMagic) w.pod(c);
  w.pod(kVersion);
  w.u64(ck.iteration);
  w.u64(ck.config_hash);
  w.str(ck.config_text);
  w.doubles(ck.meta.band_centers);
  w.u64(ck.meta.classes.size());
  for (const auto& c : ck.meta.classes) w.str(c);
  w.u64(ck.meta.height);
  w.u64(ck.meta.width);
  w.u64(ck.params.size());
  for (const auto& p : ck.params) {
    w.str(p.name);
    for (std::uint64_t d : {p.shape.n, p.shape.c, p.shape.h, p.shape.w}) w.u64(d);
    w.doubles(p.values);
  }
  w.u64(static_cast<std::uint64_t>(ck.optimizer));
  w.u64(ck.optimizer_steps);
  w.u64(ck.first_moments.size());
  for (const auto& m : ck.first_moments) w.doubles(m);
  w.u64(ck.second_moments.size());
  for (const auto& m : ck.second_moments) w.doubles(m);
  return w.take();
}

Checkpoint deserialize(const std::string& bytes, const std::string& source) {
  Reader r(bytes, source);
  for (char c : kMagic)
    if (r.pod<char>() != c) r.fail("not an ossdet checkpoint");
  if (const auto v = r.pod<std::uint32_t>(); v != kVersion) r.fail("unsupported version " + std::to_string(v));
  Checkpoint ck;
  ck.iteration = r.u64();
  ck.config_hash = r.u64();
  ck.config_text = r.str();
  ck.meta.band_centers = r.doubles();
  for (std::uint64_t n = r.u64(), i = 0; i < n; ++i) ck.meta.classes.push_back(r.str());
  ck.meta.height = r.u64();
  ck.meta.width = r.u64();
  for (std::uint64_t n = r.u64(), i = 0; i < n; ++i) {
    StoredTensor t;
    t.name = r.str();
    t.shape.n = r.u64();
    t.shape.c = r.u64();
    t.shape.h = r.u64();
    t.shape.w = r.u64();
    t.values = r.doubles();
    if (t.values.size() != t.shape.numel()) r.fail("parameter " + t.name + " has the wrong element count");
    ck.params.push_back(std::move(t));
  }
  const std::uint64_t kind = r.u64();
  if (kind > 1) r.fail("unknown optimizer kind");
  ck.optimizer = static_cast<OptimizerKind>(kind);
  ck.optimizer_steps = r.u64();
  for (std::uint64_t n = r.u64(), i = 0; i < n; ++i) ck.first_moments.push_back(r.doubles());
  for (std::uint64_t n = r.u64(), i = 0; i < n; ++i) ck.second_moments.push_back(r.doubles());
  if (!r.done()) r.fail("trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string bytes = serialize(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("cannot write " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str(), path.string());
}

Checkpoint capture(std::uint64_t iteration, const std::string& config_text, const ModelMeta& meta,
                   const model::ParamStore& params, const Optimizer* opt) {
  Checkpoint ck;
  ck.iteration = iteration;
  ck.config_text = config_text;
  ck.config_hash = fnv1a(config_text);
  ck.meta = meta;
  for (const auto& p : params.params()) {
    const auto d = p.tensor.data();
    ck.params.push_back({p.name, p.tensor.shape(), {d.begin(), d.end()}});
  }
  if (opt) {
    ck.optimizer = opt->kind();
    ck.optimizer_steps = opt->steps();
    ck.first_moments = opt->first();
    ck.second_moments = opt->second();
  }
  return ck;
}

void restore(const Checkpoint& ck, model::ParamStore& params, Optimizer* opt) {
  auto& ps = params.params();
  if (ps.size() != ck.params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(ck.params.size()) + " parameters, model has " +
                          std::to_string(ps.size()));
  }
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const StoredTensor& s = ck.params[i];
    if (s.name != ps[i].name || !(s.shape == ps[i].tensor.shape())) {
      throw CheckpointError("parameter mismatch: stored " + s.name + " " + s.shape.str() + ", model " +
                            ps[i].name + " " + ps[i].tensor.shape().str());
    }
    auto d = ps[i].tensor.data_mut();
    std::copy(s.values.begin(), s.values.end(), d.begin());
  }
  if (opt) {
    if (opt->kind() != ck.optimizer || opt->first().size() != ck.first_moments.size() ||
        opt->second().size() != ck.second_moments.size()) {
      throw CheckpointError("optimizer state does not match this run");
    }
    opt->first() = ck.first_moments;
    opt->second() = ck.second_moments;
    opt->set_steps(ck.optimizer_steps);
  }
}

}  // namespace ossdet::app
