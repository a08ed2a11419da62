#include "ossdet/app/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

#include "ossdet/data/spectral.hpp"
#include "ossdet/util/svg.hpp"

namespace ossdet::app {

using geom::OrientedBox;
using tensor::Tensor;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return data::scene_seed(a, b); }

std::string fmt(const char* pattern, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string iter_name(std::uint64_t it) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iter_%06llu.ckpt", static_cast<unsigned long long>(it));
  return buf;
}

OrientedBox mirror(OrientedBox b, unsigned flip, double w, double h) {
  if (flip & 1u) {
    b.cx = w - b.cx;
    b.theta = -b.theta;
  }
  if (flip & 2u) {
    b.cy = h - b.cy;
    b.theta = -b.theta;
  }
  return geom::canonicalize(b);
}

void write_text(const std::filesystem::path& p, const std::string& s) { util::write_file(p, s); }

}  // namespace

std::vector<std::size_t> band_indices(BandMode mode, const std::vector<double>& centers) {
  if (mode == BandMode::rgb3) return data::rgb_band_indices(centers);
  std::vector<std::size_t> all(centers.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return all;
}

ModelMeta model_meta(const RunConfig& cfg, const data::Manifest& m) {
  ModelMeta meta;
  for (std::size_t b : band_indices(cfg.bands, m.band_centers)) meta.band_centers.push_back(m.band_centers[b]);
  meta.classes = m.classes;
  meta.height = m.height;
  meta.width = m.width;
  return meta;
}

model::DetectorConfig detector_config(const RunConfig& cfg, const ModelMeta& meta) {
  model::DetectorConfig d;
  d.in_bands = meta.band_centers.size();
  d.num_classes = meta.classes.size();
  d.image_height = meta.height;
  d.image_width = meta.width;
  d.channels = cfg.channels;
  d.sfa_k = cfg.sfa_k;
  d.cssp_fusion = cfg.cssp_fusion;
  d.cafr_axis = cfg.cafr_axis;
  return d;
}

std::vector<const data::Scene*> split_scenes(const data::Dataset& ds, Split split) {
  switch (split) {
    case Split::train: return ds.split(ds.manifest.train);
    case Split::test: return ds.split(ds.manifest.test);
    case Split::all: break;
  }
  std::vector<const data::Scene*> out;
  for (const auto& s : ds.scenes) out.push_back(&s);
  return out;
}

Tensor make_batch(std::span<const data::Scene* const> scenes, std::span<const std::size_t> bands,
                  std::span<const unsigned> flips, std::vector<std::vector<OrientedBox>>* boxes) {
  if (scenes.empty()) throw std::invalid_argument("empty batch");
  const std::size_t h = scenes[0]->cube.height, w = scenes[0]->cube.width, nb = bands.size();
  std::vector<double> v(scenes.size() * nb * h * w);
  if (boxes) boxes->clear();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const data::MSICube& cube = scenes[i]->cube;
    if (cube.height != h || cube.width != w) throw data::DataError("scene " + cube.scene_id + " has a different size");
    const unsigned f = flips.empty() ? 0u : flips[i];
    for (std::size_t b = 0; b < nb; ++b) {
      if (bands[b] >= cube.bands) throw data::DataError("band index out of range for " + cube.scene_id);
      double* dst = v.data() + (i * nb + b) * h * w;
      for (std::size_t y = 0; y < h; ++y) {
        const std::size_t sy = (f & 2u) ? h - 1 - y : y;
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t sx = (f & 1u) ? w - 1 - x : x;
          dst[y * w + x] = (double(cube.at(bands[b], sy, sx)) - kInputMean) * kInputScale;
        }
      }
    }
    if (boxes) {
      std::vector<OrientedBox> bx;
      for (const auto& b : scenes[i]->annotation.boxes) bx.push_back(f ? mirror(b, f, double(w), double(h)) : b);
      boxes->push_back(std::move(bx));
    }
  }
  return Tensor::from({scenes.size(), nb, h, w}, std::move(v));
}

std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch, std::uint64_t iteration,
                                       std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("no training scenes");
  const std::size_t b = std::min(batch, n);
  std::vector<std::size_t> out;
  std::uint64_t cached_epoch = ~0ULL;
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 0; j < b; ++j) {
    const std::uint64_t pos = iteration * b + j;
    const std::uint64_t epoch = pos / n;
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::mt19937_64 rng(mix(seed, epoch));
      // Fisher-Yates with an explicit draw keeps the order library-independent.
      for (std::size_t k = n; k > 1; --k) std::swap(perm[k - 1], perm[rng() % k]);
      cached_epoch = epoch;
    }
    out.push_back(perm[pos % n]);
  }
  return out;
}

std::vector<unsigned> batch_flips(std::size_t batch, std::uint64_t iteration, std::uint64_t seed) {
  std::vector<unsigned> out;
  for (std::size_t j = 0; j < batch; ++j) out.push_back(unsigned(mix(mix(seed ^ 0xf11bULL, iteration), j) & 3u));
  return out;
}

namespace {

struct Batch {
  std::vector<const data::Scene*> scenes;
  Tensor input;
  std::vector<std::vector<OrientedBox>> boxes;
};

Batch assemble(const std::vector<const data::Scene*>& pool, const RunConfig& cfg, const std::vector<std::size_t>& bands,
               std::uint64_t iteration) {
  Batch b;
  for (std::size_t i : batch_indices(pool.size(), cfg.batch_size, iteration, *cfg.seed)) b.scenes.push_back(pool[i]);
  std::vector<unsigned> flips;
  if (cfg.augment) flips = batch_flips(b.scenes.size(), iteration, *cfg.seed);
  b.input = make_batch(b.scenes, bands, flips, &b.boxes);
  return b;
}

std::vector<std::size_t> resolve_bands(const ModelMeta& meta, const data::Manifest& m) {
  std::vector<std::size_t> out;
  for (double c : meta.band_centers) {
    auto it = std::find(m.band_centers.begin(), m.band_centers.end(), c);
    if (it == m.band_centers.end()) {
      throw data::DataError("dataset has no band at " + fmt("%g", c) + " nm required by the checkpoint");
    }
    out.push_back(std::size_t(it - m.band_centers.begin()));
  }
  return out;
}

void dump_divergence(const std::filesystem::path& path, std::uint64_t it, const Batch& b,
                     const model::LossBreakdown& lb) {
  std::ofstream out(path);
  out << "non-finite loss at iteration " << it << "\n";
  out << "L_det=" << lb.det.item() << " L_I=" << lb.l_i.item() << " L_D=" << lb.l_d.item()
      << " L_act=" << lb.act.item() << " L=" << lb.total.item() << " positives=" << lb.positives << "\n";
  const auto x = b.input.data();
  const std::size_t per = b.input.shape().item();
  for (std::size_t i = 0; i < b.scenes.size(); ++i) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    std::size_t bad = 0;
    for (std::size_t j = i * per; j < (i + 1) * per; ++j) {
      if (!std::isfinite(x[j])) ++bad;
      lo = std::min(lo, x[j]);
      hi = std::max(hi, x[j]);
    }
    out << "scene " << b.scenes[i]->cube.scene_id << " input range [" << lo << ", " << hi << "] non-finite "
        << bad << " boxes " << b.boxes[i].size() << "\n";
    for (const auto& bx : b.boxes[i])
      out << "  box cx=" << bx.cx << " cy=" << bx.cy << " w=" << bx.w << " h=" << bx.h << " theta=" << bx.theta
          << " class=" << bx.class_id << "\n";
  }
}

}  // namespace

TrainSummary train(const RunConfig& cfg, std::ostream* progress) {
  validate(cfg);
  if (!cfg.seed) throw std::invalid_argument("training requires --seed");
  const data::Dataset ds = data::read_dataset(cfg.dataset);
  const auto pool = split_scenes(ds, cfg.train_split);
  if (pool.empty()) throw data::DataError("the " + std::string(to_string(cfg.train_split)) + " split is empty");
  const ModelMeta meta = model_meta(cfg, ds.manifest);
  const auto bands = band_indices(cfg.bands, ds.manifest.band_centers);
  model::Detector det(detector_config(cfg, meta), *cfg.seed);
  Optimizer opt(cfg.optimizer, cfg.lr, cfg.momentum, cfg.weight_decay, cfg.grad_clip, det.params());
  const std::string text = training_text(cfg);

  std::filesystem::create_directories(cfg.out / "checkpoints");
  write_text(cfg.out / "config.txt", text);
  std::ofstream log(cfg.out / "loss.tsv", std::ios::trunc);
  log << "iteration\tL_det\tL_I\tL_D\tL_act\tL\tpositives\tgrad_norm\n";

  TrainSummary summary;
  auto snapshot = [&](std::uint64_t it) {
    const auto path = cfg.out / "checkpoints" / iter_name(it);
    save_checkpoint(path, capture(it, text, meta, det.params(), &opt));
    return path;
  };
  snapshot(0);
  for (std::uint64_t it = 0; it < cfg.iterations; ++it) {
    Batch b = assemble(pool, cfg, bands, it);
    model::ForwardResult out = det.forward(b.input);
    model::LossBreakdown lb = det.loss(out, b.boxes, cfg.alpha, cfg.gamma);
    LossRecord rec{it, lb.det.item(), lb.l_i.item(), lb.l_d.item(), lb.act.item(), lb.total.item(), lb.positives, 0};
    if (!std::isfinite(rec.total)) {
      const auto dump = cfg.out / "nan_dump.txt";
      dump_divergence(dump, it, b, lb);
      throw TrainingDiverged("non-finite loss at iteration " + std::to_string(it) + "; batch dumped to " +
                             dump.string());
    }
    det.params().zero_grad();
    tensor::backward(lb.total);
    rec.grad_norm = opt.step(det.params());
    summary.log.push_back(rec);
    log << it << '\t' << fmt("%.17g", rec.l_det) << '\t' << fmt("%.17g", rec.l_i) << '\t' << fmt("%.17g", rec.l_d)
        << '\t' << fmt("%.17g", rec.l_act) << '\t' << fmt("%.17g", rec.total) << '\t' << rec.positives << '\t'
        << fmt("%.17g", rec.grad_norm) << '\n';
    if (progress && (it % 25 == 0 || it + 1 == cfg.iterations)) {
      *progress << "iter " << it << " L=" << fmt("%.5f", rec.total) << " L_det=" << fmt("%.5f", rec.l_det)
                << " L_act=" << fmt("%.5f", rec.l_act) << "\n";
    }
    const std::uint64_t done = it + 1;
    if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done != cfg.iterations) snapshot(done);
  }
  if (cfg.iterations > 0) snapshot(cfg.iterations);
  summary.final_checkpoint = cfg.out / "model.ckpt";
  save_checkpoint(summary.final_checkpoint, capture(cfg.iterations, text, meta, det.params(), &opt));
  return summary;
}

model::LossBreakdown batch_loss(const Checkpoint& ck, const data::Dataset& ds, std::uint64_t iteration) {
  RunConfig cfg = parse_training_text(ck.config_text);
  if (!cfg.seed) throw CheckpointError("checkpoint configuration has no seed");
  model::Detector det(detector_config(cfg, ck.meta), *cfg.seed);
  restore(ck, det.params(), nullptr);
  const auto pool = split_scenes(ds, cfg.train_split);
  Batch b = assemble(pool, cfg, resolve_bands(ck.meta, ds.manifest), iteration);
  return det.loss(det.forward(b.input), b.boxes, cfg.alpha, cfg.gamma);
}

EvalRun evaluate_checkpoint(const Checkpoint& ck, const data::Dataset& ds, Split split,
                            const model::DecodeOptions& opt, std::optional<BandMode> requested,
                            std::size_t threads) {
  const RunConfig cfg = parse_training_text(ck.config_text);
  const data::Manifest& m = ds.manifest;
  if (requested && *requested != cfg.bands) {
    throw data::DataError("band mode " + std::string(to_string(*requested)) + " requested, checkpoint was trained with " +
                          std::string(to_string(cfg.bands)));
  }
  const ModelMeta expect = model_meta(cfg, m);
  if (expect.band_centers != ck.meta.band_centers) {
    throw data::DataError("band mode mismatch: checkpoint (" + std::string(to_string(cfg.bands)) + ") uses " +
                          std::to_string(ck.meta.band_centers.size()) + " bands that the dataset's " +
                          std::to_string(m.band_centers.size()) + "-band manifest does not provide in that mode");
  }
  if (m.classes != ck.meta.classes) throw data::DataError("dataset classes differ from the checkpoint's");
  if (m.height != ck.meta.height || m.width != ck.meta.width) {
    throw data::DataError("dataset images are " + std::to_string(m.height) + "x" + std::to_string(m.width) +
                          ", checkpoint expects " + std::to_string(ck.meta.height) + "x" +
                          std::to_string(ck.meta.width));
  }
  const auto bands = resolve_bands(ck.meta, m);
  model::Detector det(detector_config(cfg, ck.meta), cfg.seed.value_or(0));
  restore(ck, det.params(), nullptr);

  const auto scenes = split_scenes(ds, split);
  EvalRun run;
  run.dets.resize(scenes.size());
  for (const auto* s : scenes) {
    run.ids.push_back(s->cube.scene_id);
    run.gts.push_back(s->annotation.boxes);
  }
  auto work = [&](std::size_t first) {
    tensor::NoGradGuard no_grad;
    for (std::size_t i = first; i < scenes.size(); i += threads) {
      const data::Scene* one[] = {scenes[i]};
      model::ForwardResult out = det.forward(make_batch(one, bands, {}, nullptr));
      run.dets[i] = model::decode_and_nms(out.head, 0, opt);
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, scenes.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(work, t);
  work(0);
  for (auto& t : pool) t.join();
  run.result = eval::evaluate(run.dets, run.gts, m.classes);
  return run;
}

void write_eval(const EvalRun& run, const std::vector<std::string>& classes, const std::filesystem::path& dir) {
  eval::write_report(run.result, dir);
  std::filesystem::create_directories(dir / "detections");
  for (std::size_t i = 0; i < run.ids.size(); ++i) {
    write_text(dir / "detections" / (run.ids[i] + ".txt"), model::format_detections(run.dets[i], classes));
  }
}

}  // namespace ossdet::app
