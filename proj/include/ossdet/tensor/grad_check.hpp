#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ossdet/tensor/tensor.hpp"

namespace ossdet::tensor {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Relative error is |a - n| / max(|a|, |n|, denom_floor).
  double denom_floor = 1e-3;
  /// Coordinates probed per input; 0 probes every coordinate.
  std::size_t max_coords_per_input = 0;
  /// Seeds the output projection and coordinate sampling.
  std::uint64_t seed = 0x5eedULL;
};

struct GradCheckReport {
  bool passed = false;
  bool deterministic = true;
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;

  std::string summary() const;
};

using GradClosure = std::function<Tensor(std::span<const Tensor>)>;

/// Compares reverse-mode gradients against central differences for every
/// input. Non-scalar closure outputs are reduced to a scalar with a fixed
/// random projection. The closure is evaluated twice up front; differing
/// outputs are reported as a non-deterministic failure.
GradCheckReport grad_check(const GradClosure& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options = {});

}  // namespace ossdet::tensor
