#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "ossdet/data/dataset.hpp"

namespace ossdet::app {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kVerifyFailed = 3 };

struct GenOptions {
  std::filesystem::path out;
  std::size_t scenes = 10;
  std::uint64_t seed = 1;
  bool force = false;
  double train_fraction = 0.7;
  data::GenConfig gen;
};

/// Scene i uses seed scene_seed(seed, i) and id scene_NNNNN, so the result is
/// independent of the number of worker threads.
data::Dataset generate_dataset(const GenOptions& opt, std::size_t threads);

/// Writes the dataset; a non-empty `out` is replaced only with `force`.
data::Dataset cmd_gen(const GenOptions& opt, std::size_t threads);

/// Full command-line entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ossdet::app
