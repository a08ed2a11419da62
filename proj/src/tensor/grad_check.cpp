#include "ossdet/tensor/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <sstream>

#include "ossdet/tensor/ops.hpp"

namespace ossdet::tensor {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "ok" : "FAIL") << " max_rel_err=" << max_rel_error << " coords=" << coords_checked;
  if (!deterministic) os << " (non-deterministic closure)";
  if (!passed && deterministic) {
    os << " worst input " << worst_input << "[" << worst_index << "] analytic=" << worst_analytic
       << " numeric=" << worst_numeric;
  }
  return os.str();
}

namespace {

bool bit_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

GradCheckReport grad_check(const GradClosure& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  std::mt19937_64 rng(options.seed);

  const Tensor first = f(inputs);
  const Tensor second = f(inputs);
  if (first.shape() != second.shape() || !bit_equal(first.data(), second.data())) {
    report.deterministic = false;
    return report;
  }

  Tensor projection;
  if (first.numel() != 1) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> w(first.numel());
    for (double& v : w) v = u(rng);
    projection = Tensor::from(first.shape(), std::move(w));
  }
  auto scalar_loss = [&]() {
    Tensor out = f(inputs);
    return projection.defined() ? sum(mul(out, projection)) : out;
  };

  for (Tensor& t : inputs) t.zero_grad();
  backward(scalar_loss());

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor& t = inputs[i];
    if (!t.requires_grad()) continue;
    const std::vector<double> analytic =
        t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                     : std::vector<double>(t.numel(), 0.0);
    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_input > 0 && coords.size() > options.max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_input);
      std::sort(coords.begin(), coords.end());
    }
    auto values = t.data_mut();
    for (const std::size_t j : coords) {
      const double orig = values[j];
      values[j] = orig + options.step;
      const double plus = scalar_loss().item();
      values[j] = orig - options.step;
      const double minus = scalar_loss().item();
      values[j] = orig;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = analytic[j];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.denom_floor});
      const double err = std::abs(a - numeric) / denom;
      ++report.coords_checked;
      if (!(err <= report.max_rel_error)) {
        report.max_rel_error = err;
        report.worst_input = i;
        report.worst_index = j;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

}  // namespace ossdet::tensor
