#include "ossdet/model/cssp.hpp"

#include <array>

namespace ossdet::model {

using namespace tensor;

Tensor spectral_attention(const Tensor& f, const Tensor& w_e, const Tensor& b_e) {
  Tensor gate = sigmoid(add(mul(pool(f, PoolKind::gap), w_e), b_e));
  return mul(f, gate);
}

Tensor spatial_attention(const Tensor& f, const Tensor& w_a, const Tensor& b_a) {
  Tensor gate = sigmoid(add(mul(pool(f, PoolKind::channel_mean), w_a), b_a));
  return mul(f, gate);
}

CrossModulated cross_modulate(const Tensor& f_e, const Tensor& f_a, double eps) {
  const Shape s = f_e.shape();
  if (!(f_a.shape() == s)) throw ShapeError("cross_modulate: " + s.str() + " vs " + f_a.shape().str());
  const Shape flat{s.n, 1, s.c, s.h * s.w};
  Tensor fe = reshape(f_e, flat);
  Tensor fa = reshape(f_a, flat);
  CrossModulated out;
  out.m_ea = tanh(frobenius_normalize(matmul(fe, fa, true, false), eps));
  Tensor a_hat = add(matmul(fe, out.m_ea), fa);
  out.m_ae = tanh(frobenius_normalize(matmul(a_hat, fe, true, false), eps));
  Tensor e_hat = add(matmul(a_hat, out.m_ae), fe);
  out.a_hat = reshape(a_hat, s);
  out.e_hat = reshape(e_hat, s);
  return out;
}

Cssp::Cssp(ParamStore& ps, const CsspConfig& cfg, const std::string& prefix) : cfg_(cfg) {
  if (cfg.height * cfg.width > kMaxPositions) {
    throw std::invalid_argument("CSSP top level has " + std::to_string(cfg.height * cfg.width) +
                                " positions; the limit is " + std::to_string(kMaxPositions));
  }
  w_e = ps.add(prefix + "/w_e", Shape{1, cfg.channels, 1, 1}, Init::ones);
  b_e = ps.add(prefix + "/b_e", Shape{1, cfg.channels, 1, 1}, Init::zeros);
  w_a = ps.add(prefix + "/w_a", Shape{1, 1, cfg.height, cfg.width}, Init::ones);
  b_a = ps.add(prefix + "/b_a", Shape{1, 1, cfg.height, cfg.width}, Init::zeros);
  if (cfg.fusion == CsspFusion::concat_conv) {
    fuse = Conv::make(ps, prefix + "/fuse", 2 * cfg.channels, cfg.channels, 1);
  }
}

Tensor Cssp::forward(const Tensor& f5) const {
  const Shape& s = f5.shape();
  if (s.c != cfg_.channels || s.h != cfg_.height || s.w != cfg_.width) {
    throw ShapeError("CSSP configured for (C=" + std::to_string(cfg_.channels) + ", " +
                     std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width) + "), got " +
                     s.str());
  }
  Tensor fe = spectral_attention(f5, w_e, b_e);
  Tensor fa = spatial_attention(f5, w_a, b_a);
  CrossModulated m = cross_modulate(fe, fa, cfg_.eps);
  if (cfg_.fusion == CsspFusion::sum) return add(m.a_hat, m.e_hat);
  std::array<Tensor, 2> parts = {m.a_hat, m.e_hat};
  return fuse(concat_channels(parts));
}

}  // namespace ossdet::model
