#include "ossdet/model/params.hpp"

#include <cmath>
#include <stdexcept>

namespace ossdet::model {

Tensor ParamStore::add(const std::string& name, Shape shape, Init init, double value) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  std::vector<double> v(shape.numel(), 0.0);
  switch (init) {
    case Init::zeros: break;
    case Init::ones: std::fill(v.begin(), v.end(), 1.0); break;
    case Init::constant: std::fill(v.begin(), v.end(), value); break;
    case Init::kaiming: {
      double std = value * std::sqrt(2.0 / double(std::max<std::size_t>(1, shape.item())));
      std::normal_distribution<double> nd(0.0, std);
      for (double& x : v) x = nd(rng_);
      break;
    }
  }
  Tensor t = Tensor::from(shape, std::move(v), true);
  index_.emplace(name, params_.size());
  params_.push_back({name, t});
  return t;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return params_[it->second].tensor;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

Conv Conv::make(ParamStore& ps, const std::string& name, std::size_t cin, std::size_t cout,
                std::size_t k, std::size_t stride, Init init, double gain, double bias_value) {
  Conv c;
  c.weight = ps.add(name + "/weight", Shape{cout, cin, k, k}, init, gain);
  c.bias = ps.add(name + "/bias", Shape{1, cout, 1, 1}, Init::constant, bias_value);
  c.stride = stride;
  c.pad = (k - 1) / 2;
  return c;
}

Tensor Conv::operator()(const Tensor& x) const {
  return tensor::conv2d(x, weight, bias, stride, pad);
}

Linear Linear::make(ParamStore& ps, const std::string& name, std::size_t cin, std::size_t cout,
                    Init init, double gain, double bias_value) {
  Linear l;
  l.weight = ps.add(name + "/weight", Shape{cout, cin, 1, 1}, init, gain);
  l.bias = ps.add(name + "/bias", Shape{1, cout, 1, 1}, Init::constant, bias_value);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const { return tensor::fc(x, weight, bias); }

}  // namespace ossdet::model
