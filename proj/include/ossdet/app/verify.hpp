#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ossdet/tensor/grad_check.hpp"

namespace ossdet::app {

struct GradCase {
  std::string module;
  std::string op;
  std::string shape;
  tensor::GradCheckReport report;
};

/// Finite-difference checks of every differentiable operator, on shapes drawn
/// afresh each round (about 40 cases per round).
std::vector<GradCase> gradient_suite(std::uint64_t seed, std::size_t rounds);

struct Check {
  std::string module;
  std::string invariant;
  bool passed = false;
  std::string detail;
};

/// Gradient suite (one line per module and operator) plus the exact
/// identities, loss fixtures and IoU fixtures.
std::vector<Check> run_verify(std::uint64_t seed = 1, std::size_t rounds = 1);

std::string format_table(const std::vector<Check>& checks);

}  // namespace ossdet::app
