#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "ossdet/tensor/ops.hpp"

namespace ossdet::model {

using tensor::Tensor;

enum class Init {
  zeros,
  ones,
  constant,  // every entry = value
  kaiming,   // normal, std = value * sqrt(2 / fan_in), fan_in = c * h * w
};

struct Param {
  std::string name;
  Tensor tensor;
};

/// Registry of learnable tensors in creation order. Names are unique.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}

  Tensor add(const std::string& name, Shape shape, Init init, double value = 1.0);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<Param>& params() const { return params_; }
  std::vector<Param>& params() { return params_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
  std::mt19937_64 rng_;
};

struct Conv {
  Tensor weight;
  Tensor bias;
  std::size_t stride = 1;
  std::size_t pad = 0;

  static Conv make(ParamStore& ps, const std::string& name, std::size_t cin, std::size_t cout,
                   std::size_t k, std::size_t stride = 1, Init init = Init::kaiming,
                   double gain = 1.0, double bias_value = 0.0);
  Tensor operator()(const Tensor& x) const;
};

struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear make(ParamStore& ps, const std::string& name, std::size_t cin, std::size_t cout,
                     Init init = Init::kaiming, double gain = 1.0, double bias_value = 0.0);
  Tensor operator()(const Tensor& x) const;
};

}  // namespace ossdet::model
