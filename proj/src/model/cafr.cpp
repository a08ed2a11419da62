#include "ossdet/model/cafr.hpp"

namespace ossdet::model {

using namespace tensor;

CafrWeights cafr_weights(const Tensor& v_high, const Tensor& v_low, SoftmaxAxis axis) {
  const Shape s = v_high.shape();
  if (!(v_low.shape() == s) || s.h != 1 || s.w != 1) {
    throw ShapeError("cafr_weights: " + s.str() + " vs " + v_low.shape().str());
  }
  const Shape col{s.n, 1, s.c, 1};
  Tensor vh = reshape(v_high, col);
  Tensor vl = reshape(v_low, col);
  CafrWeights out;
  out.attention = softmax(matmul(vh, vl, false, true), axis == SoftmaxAxis::row ? 3 : 2);
  out.w_high = reshape(matmul(out.attention, vh, true, false), s);
  out.w_low = reshape(matmul(out.attention, vl), s);
  return out;
}

Cafr::Cafr(ParamStore& ps, const CafrConfig& cfg, const std::string& prefix) : cfg_(cfg) {
  const std::size_t c = cfg.channels;
  align = Conv::make(ps, prefix + "/align", c, c, 3, 2);
  fc_high = Linear::make(ps, prefix + "/fc_high", c, c, Init::zeros, 1.0, 1.0);
  fc_low = Linear::make(ps, prefix + "/fc_low", c, c, Init::zeros, 1.0, 1.0);
}

Tensor Cafr::forward(const Tensor& f_hat, const Tensor& f_bar_low) const {
  const Shape& hi = f_hat.shape();
  const Shape& lo = f_bar_low.shape();
  if (lo.n != hi.n || lo.c != hi.c || lo.h != 2 * hi.h || lo.w != 2 * hi.w) {
    throw ShapeError("CAFR needs the lower level at twice the resolution: " + hi.str() + " vs " + lo.str());
  }
  Tensor aligned = align(f_bar_low);
  Tensor v_high = fc_high(pool(f_hat, PoolKind::gap));
  Tensor v_low = fc_low(pool(aligned, PoolKind::gap));
  CafrWeights w = cafr_weights(v_high, v_low, cfg_.axis);
  return add(mul(f_hat, w.w_high), mul(aligned, w.w_low));
}

}  // namespace ossdet::model
