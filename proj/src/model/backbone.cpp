#include "ossdet/model/backbone.hpp"

namespace ossdet::model {

using namespace tensor;

Backbone::Backbone(ParamStore& ps, const BackboneConfig& cfg, const std::string& prefix) : cfg_(cfg) {
  if (cfg.in_bands == 0 || cfg.channels == 0) throw std::invalid_argument("backbone needs bands and channels");
  stem_ = Conv::make(ps, prefix + "/stem", cfg.in_bands, cfg.widths[0], 3, 2);
  for (std::size_t s = 0; s < 4; ++s) {
    std::size_t cin = cfg.widths[s], cout = cfg.widths[s + 1];
    for (std::size_t b = 0; b < 2; ++b) {
      std::string name = prefix + "/stage" + std::to_string(s + 2) + "/block" + std::to_string(b);
      Block& blk = stages_[s][b];
      std::size_t in = b == 0 ? cin : cout;
      blk.conv1 = Conv::make(ps, name + "/conv1", in, cout, 3, b == 0 ? 2 : 1);
      blk.conv2 = Conv::make(ps, name + "/conv2", cout, cout, 3, 1, Init::zeros);
      blk.project = b == 0;
      if (blk.project) blk.shortcut = Conv::make(ps, name + "/shortcut", in, cout, 1, 2);
    }
  }
  for (std::size_t l = 0; l < 5; ++l) {
    laterals_[l] = Conv::make(ps, prefix + "/lateral" + std::to_string(l + 1), cfg.widths[l],
                              cfg.channels, 1);
  }
}

Tensor Backbone::run_block(const Block& b, const Tensor& x) const {
  Tensor skip = b.project ? b.shortcut(x) : x;
  Tensor y = b.conv2(relu(b.conv1(x)));
  return relu(add(skip, y));
}

Pyramid Backbone::forward(const Tensor& x) const {
  const Shape& s = x.shape();
  if (s.c != cfg_.in_bands) {
    throw ShapeError("backbone expects " + std::to_string(cfg_.in_bands) + " bands, input is " + s.str());
  }
  if (s.h == 0 || s.w == 0 || s.h % 32 != 0 || s.w % 32 != 0) {
    throw ShapeError("backbone input spatial dims must be positive multiples of 32, got " + s.str());
  }
  Pyramid p;
  Tensor f = relu(stem_(x));
  p.levels[0] = laterals_[0](f);
  for (std::size_t st = 0; st < 4; ++st) {
    for (const Block& b : stages_[st]) f = run_block(b, f);
    p.levels[st + 1] = laterals_[st + 1](f);
  }
  return p;
}

}  // namespace ossdet::model
