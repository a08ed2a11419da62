#pragma once

#include <array>

#include "ossdet/model/params.hpp"

namespace ossdet::model {

struct BackboneConfig {
  std::size_t in_bands = 8;
  std::size_t channels = 32;                            // C of every pyramid level
  std::array<std::size_t, 5> widths = {16, 24, 32, 48, 64};  // internal width per level
};

/// F_1..F_5 at strides 2, 4, 8, 16, 32 (index 0 is F_1).
struct Pyramid {
  std::array<Tensor, 5> levels;
};

/// Stem 3x3/2 conv, then four stages of two residual blocks (the first with a
/// stride-2 entry conv and 1x1/2 projection shortcut), then 1x1 laterals to C.
/// The second conv of each block starts at zero, so each block starts as
/// relu(shortcut).
class Backbone {
 public:
  Backbone(ParamStore& ps, const BackboneConfig& cfg, const std::string& prefix = "backbone");
  Pyramid forward(const Tensor& x) const;
  const BackboneConfig& config() const { return cfg_; }

 private:
  struct Block {
    Conv conv1, conv2;
    bool project = false;
    Conv shortcut;
  };

  BackboneConfig cfg_;
  Conv stem_;
  std::array<std::array<Block, 2>, 4> stages_;
  std::array<Conv, 5> laterals_;

  Tensor run_block(const Block& b, const Tensor& x) const;
};

}  // namespace ossdet::model
