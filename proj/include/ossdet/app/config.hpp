#pragma once

// Run configuration shared by the train / eval commands. Every key can be set
// in a flat key=value file and overridden by a flag of the same name.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ossdet/model/detector.hpp"

namespace CLI {
class App;
}

namespace ossdet::app {

enum class BandMode { msi8, rgb3 };
enum class OptimizerKind { sgd, adam };
enum class Split { train, test, all };

std::string to_string(BandMode m);
std::string to_string(OptimizerKind k);
std::string to_string(Split s);

struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path out;
  BandMode bands = BandMode::msi8;
  std::size_t channels = 32;
  std::size_t levels = 4;  // head levels; the architecture fixes this at 4
  std::size_t sfa_k = 3;
  double gamma = 0.1;
  double alpha = 0.6;
  model::CsspFusion cssp_fusion = model::CsspFusion::concat_conv;
  model::SoftmaxAxis cafr_axis = model::SoftmaxAxis::row;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double grad_clip = 10.0;  // global L2 norm; 0 disables
  std::size_t iterations = 500;
  std::size_t batch_size = 4;
  std::size_t checkpoint_every = 100;
  bool augment = false;     // random flips per sample
  Split train_split = Split::train;
  std::optional<std::uint64_t> seed;
  // Evaluation.
  Split eval_split = Split::test;
  double score_thresh = 0.05;
  double nms_iou = 0.5;
};

/// Registers --config FILE (see expand_config).
void add_config_option(CLI::App& app);

/// key=value lines ('#' starts a comment) as --key=value arguments.
std::vector<std::string> read_config_file(const std::filesystem::path& path);

/// Replaces every --config FILE at or after position `insert_at` with the
/// file's entries, placed at `insert_at` (just after the subcommand name) so
/// that explicit flags, parsed later with a take-last policy, win.
std::vector<std::string> expand_config(std::vector<std::string> args, std::size_t insert_at);

/// Registers every RunConfig key as --key on `app`, plus --config FILE.
void add_run_options(CLI::App& app, RunConfig& cfg);

/// Rejects values outside their domains; throws std::invalid_argument.
void validate(const RunConfig& cfg);

/// The keys that determine a training run (paths and eval-only keys excluded),
/// one key=value per line in a fixed order, with round-trip exact numbers.
std::string training_text(const RunConfig& cfg);
/// Inverse of training_text for the keys it contains.
RunConfig parse_training_text(const std::string& text);

std::uint64_t fnv1a(std::string_view bytes);

/// Worker threads for generation and evaluation: OSSDET_THREADS if set (>= 1),
/// otherwise hardware concurrency.
std::size_t worker_threads();

}  // namespace ossdet::app
