#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ossdet/app/optimizer.hpp"

namespace ossdet::app {

/// What a checkpoint needs beyond the run configuration to rebuild the model.
struct ModelMeta {
  std::vector<double> band_centers;  // nm, of the bands fed to the model
  std::vector<std::string> classes;
  std::size_t height = 0;
  std::size_t width = 0;

  friend bool operator==(const ModelMeta&, const ModelMeta&) = default;
};

struct StoredTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;

  friend bool operator==(const StoredTensor&, const StoredTensor&) = default;
};

/// Little-endian binary: magic, version, iteration, config hash, config text,
/// model meta, parameters by name, optimizer kind / step count / moments.
struct Checkpoint {
  std::uint64_t iteration = 0;
  std::uint64_t config_hash = 0;
  std::string config_text;
  ModelMeta meta;
  std::vector<StoredTensor> params;
  OptimizerKind optimizer = OptimizerKind::sgd;
  std::uint64_t optimizer_steps = 0;
  std::vector<std::vector<double>> first_moments;
  std::vector<std::vector<double>> second_moments;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string serialize(const Checkpoint& ck);
Checkpoint deserialize(const std::string& bytes, const std::string& source = "<memory>");
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint capture(std::uint64_t iteration, const std::string& config_text, const ModelMeta& meta,
                   const model::ParamStore& params, const Optimizer* opt);
/// Copies stored values into `params` (names and shapes must match) and, when
/// given, the optimizer state.
void restore(const Checkpoint& ck, model::ParamStore& params, Optimizer* opt);

}  // namespace ossdet::app
