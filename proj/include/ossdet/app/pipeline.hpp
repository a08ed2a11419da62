#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ossdet/app/checkpoint.hpp"
#include "ossdet/app/config.hpp"
#include "ossdet/data/dataset.hpp"
#include "ossdet/eval/map.hpp"
#include "ossdet/model/detector.hpp"

namespace ossdet::app {

/// Bands fed to the model: all of them for msi8, the three nearest
/// 460/550/640 nm for rgb3.
std::vector<std::size_t> band_indices(BandMode mode, const std::vector<double>& centers);

ModelMeta model_meta(const RunConfig& cfg, const data::Manifest& manifest);
model::DetectorConfig detector_config(const RunConfig& cfg, const ModelMeta& meta);

std::vector<const data::Scene*> split_scenes(const data::Dataset& ds, Split split);

/// Reflectance is shifted and scaled to roughly zero mean, unit range.
constexpr double kInputMean = 0.3;
constexpr double kInputScale = 5.0;

/// Stacks the selected bands of `scenes` into (n, bands, H, W). flips[i] bit 0
/// mirrors sample i horizontally, bit 1 vertically; boxes are mirrored to match.
tensor::Tensor make_batch(std::span<const data::Scene* const> scenes, std::span<const std::size_t> bands,
                          std::span<const unsigned> flips, std::vector<std::vector<geom::OrientedBox>>* boxes);

/// Scene positions used at `iteration`: consecutive slices of per-epoch
/// permutations seeded from `seed`.
std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch, std::uint64_t iteration,
                                       std::uint64_t seed);
std::vector<unsigned> batch_flips(std::size_t batch, std::uint64_t iteration, std::uint64_t seed);

struct LossRecord {
  std::uint64_t iteration = 0;
  double l_det = 0, l_i = 0, l_d = 0, l_act = 0, total = 0;
  double positives = 0;
  double grad_norm = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainSummary {
  std::vector<LossRecord> log;
  std::filesystem::path final_checkpoint;
};

/// Single-threaded and fully determined by the configuration. Writes
/// config.txt, loss.tsv, checkpoints/iter_NNNNNN.ckpt (iteration 0, every
/// checkpoint_every iterations, last) and model.ckpt under cfg.out.
TrainSummary train(const RunConfig& cfg, std::ostream* progress = nullptr);

/// Loss of the batch used at `iteration`, evaluated with the weights stored in `ck`.
model::LossBreakdown batch_loss(const Checkpoint& ck, const data::Dataset& ds, std::uint64_t iteration);

struct EvalRun {
  std::vector<std::string> ids;
  std::vector<std::vector<geom::OrientedBox>> dets;
  std::vector<std::vector<geom::OrientedBox>> gts;
  eval::EvalResult result;
};

/// Rejects datasets whose bands, classes or image size do not fit the
/// checkpoint, and an explicit band mode that differs from the trained one.
EvalRun evaluate_checkpoint(const Checkpoint& ck, const data::Dataset& ds, Split split,
                            const model::DecodeOptions& opt, std::optional<BandMode> requested = {},
                            std::size_t threads = 1);

/// metrics.json, pr_<class>.svg and detections/<id>.txt.
void write_eval(const EvalRun& run, const std::vector<std::string>& classes, const std::filesystem::path& dir);

}  // namespace ossdet::app
