#include "ossdet/model/sacf.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace ossdet::model {

using namespace tensor;

namespace {

void check_k(std::size_t k) {
  if (k % 2 == 0 || k == 0) throw std::invalid_argument("SFA patch size must be odd, got " + std::to_string(k));
}

std::size_t clamp_index(std::ptrdiff_t v, std::size_t n) {
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
}

// Neighbour pixel index for every (pixel, offset) pair, and the softmax
// weights, for one batch item stored channel-major.
struct Neighbourhood {
  std::size_t kk = 0;
  std::vector<std::size_t> index;  // (h*w, kk)
  std::vector<double> dist;        // (h*w, kk)
  std::vector<double> weight;      // (h*w, kk)
};

Neighbourhood neighbourhood(const double* x, std::size_t c, std::size_t h, std::size_t w,
                            std::size_t k) {
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = h * w;
  Neighbourhood nb;
  nb.kk = k * k;
  nb.index.resize(hw * nb.kk);
  nb.dist.resize(hw * nb.kk);
  nb.weight.resize(hw * nb.kk);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const std::size_t p = i * w + j;
      std::size_t* idx = &nb.index[p * nb.kk];
      double* d = &nb.dist[p * nb.kk];
      double* e = &nb.weight[p * nb.kk];
      std::size_t o = 0;
      for (std::ptrdiff_t dm = -r; dm <= r; ++dm) {
        for (std::ptrdiff_t dn = -r; dn <= r; ++dn, ++o) {
          std::size_t q = clamp_index(std::ptrdiff_t(i) + dm, h) * w +
                          clamp_index(std::ptrdiff_t(j) + dn, w);
          idx[o] = q;
          double acc = 0;
          for (std::size_t ch = 0; ch < c; ++ch) {
            double diff = x[ch * hw + p] - x[ch * hw + q];
            acc += diff * diff;
          }
          d[o] = std::sqrt(acc);
        }
      }
      // The centre has distance 0, so exp(-d) <= 1 needs no max shift.
      double z = 0;
      for (o = 0; o < nb.kk; ++o) z += e[o] = std::exp(-d[o]);
      for (o = 0; o < nb.kk; ++o) e[o] /= z;
    }
  }
  return nb;
}

}  // namespace

std::vector<double> sfa_weights(const Tensor& x, std::size_t k) {
  check_k(k);
  const Shape s = x.shape();
  const std::size_t kk = k * k, hw = s.plane();
  std::vector<double> out(s.n * kk * hw);
  for (std::size_t n = 0; n < s.n; ++n) {
    Neighbourhood nb = neighbourhood(x.data().data() + n * s.item(), s.c, s.h, s.w, k);
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t o = 0; o < kk; ++o) out[(n * kk + o) * hw + p] = nb.weight[p * kk + o];
  }
  return out;
}

Tensor sfa_aggregate(const Tensor& x, std::size_t k, double eps_norm) {
  check_k(k);
  const Shape s = x.shape();
  const std::size_t hw = s.plane(), c = s.c;
  std::vector<double> out(s.numel());
  auto saved = std::make_shared<std::vector<Neighbourhood>>();
  for (std::size_t n = 0; n < s.n; ++n) {
    const double* xv = x.data().data() + n * s.item();
    double* ov = out.data() + n * s.item();
    saved->push_back(neighbourhood(xv, c, s.h, s.w, k));
    const Neighbourhood& nb = saved->back();
    for (std::size_t p = 0; p < hw; ++p) {
      const std::size_t* idx = &nb.index[p * nb.kk];
      const double* e = &nb.weight[p * nb.kk];
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* plane = xv + ch * hw;
        double centre = plane[p], acc = 0;
        for (std::size_t o = 0; o < nb.kk; ++o) acc += e[o] * (plane[idx[o]] - centre);
        ov[ch * hw + p] = (centre + centre) + acc;
      }
    }
  }
  return make_op("sfa_aggregate", s, std::move(out), {x}, [x, s, saved, eps_norm](const GradContext& ctx) {
    const auto g = ctx.out_grad();
    const auto gx = ctx.input_grad(0);
    const std::size_t hw = s.plane(), c = s.c;
    std::vector<double> a, ds;
    for (std::size_t n = 0; n < s.n; ++n) {
      const Neighbourhood& nb = (*saved)[n];
      const double* xv = x.data().data() + n * s.item();
      const double* gv = g.data() + n * s.item();
      double* gxv = gx.data() + n * s.item();
      a.assign(nb.kk, 0.0);
      ds.assign(nb.kk, 0.0);
      for (std::size_t p = 0; p < hw; ++p) {
        const std::size_t* idx = &nb.index[p * nb.kk];
        const double* e = &nb.weight[p * nb.kk];
        const double* d = &nb.dist[p * nb.kk];
        // Value path: out = 2p + sum e_o (q_o - p).
        double abar = 0;
        for (std::size_t o = 0; o < nb.kk; ++o) {
          double dot = 0;
          for (std::size_t ch = 0; ch < c; ++ch) {
            double go = gv[ch * hw + p];
            dot += go * (xv[ch * hw + idx[o]] - xv[ch * hw + p]);
            gxv[ch * hw + idx[o]] += e[o] * go;
            gxv[ch * hw + p] -= e[o] * go;
          }
          a[o] = dot;
          abar += e[o] * dot;
        }
        for (std::size_t ch = 0; ch < c; ++ch) gxv[ch * hw + p] += 2.0 * gv[ch * hw + p];
        // Weight path: s_o = -d_o, dL/ds_o = e_o (a_o - abar).
        for (std::size_t o = 0; o < nb.kk; ++o) {
          if (d[o] < eps_norm) continue;
          double coef = -e[o] * (a[o] - abar) / d[o];  // dL/dd_o / d_o
          for (std::size_t ch = 0; ch < c; ++ch) {
            double diff = xv[ch * hw + p] - xv[ch * hw + idx[o]];
            gxv[ch * hw + p] += coef * diff;
            gxv[ch * hw + idx[o]] -= coef * diff;
          }
        }
      }
    }
  });
}

FrequencySplit sde_decompose(const Tensor& f) {
  FrequencySplit out;
  out.lf = pool(f, PoolKind::avg3x3s2);
  out.hf = sub(f, upsample2x(out.lf));
  return out;
}

Sacf::Sacf(ParamStore& ps, const SacfConfig& cfg, const std::string& prefix) : cfg_(cfg) {
  check_k(cfg.k);
  const std::size_t c = cfg.channels;
  enhance = Conv::make(ps, prefix + "/sde_enhance", c, c, 1);
  lf_conv = Conv::make(ps, prefix + "/sde_lf", c, c, 3);
  merge = Conv::make(ps, prefix + "/sde_merge", 2 * c, c, 1, 1, Init::zeros);
  gate = Conv::make(ps, prefix + "/fusion_gate", 2, 2, 1, 1, Init::zeros);
}

Tensor Sacf::sde_enhance(const Tensor& hf) const {
  return mul(add_scalar(sigmoid(enhance(hf)), 1.0), hf);
}

Tensor Sacf::sde_fuse(const Tensor& hf_e, const Tensor& lf, const Tensor& f) const {
  std::array<Tensor, 2> parts = {hf_e, upsample2x(lf_conv(lf))};
  return add(merge(concat_channels(parts)), f);
}

Sacf::Gates Sacf::fusion_gates(const Tensor& f_high_up, const Tensor& f_low) const {
  std::array<Tensor, 2> means = {pool(f_high_up, PoolKind::channel_mean),
                                 pool(f_low, PoolKind::channel_mean)};
  Tensor w = sigmoid(gate(concat_channels(means)));
  return {slice_channels(w, 0, 1), slice_channels(w, 1, 1)};
}

Tensor Sacf::adaptive_fuse(const Tensor& f_high, const Tensor& f_low) const {
  Tensor up = upsample2x(f_high);
  if (!(up.shape() == f_low.shape())) {
    throw ShapeError("adaptive_fuse: upsampled " + up.shape().str() + " vs " + f_low.shape().str());
  }
  Gates g = fusion_gates(up, f_low);
  return add(mul(up, g.high), mul(f_low, g.low));
}

Tensor Sacf::forward(const Tensor& f_hat_high, const Tensor& f_low) const {
  Tensor aggregated = sfa_aggregate(f_hat_high, cfg_.k, cfg_.eps_norm);
  FrequencySplit parts = sde_decompose(f_low);
  Tensor detail = sde_fuse(sde_enhance(parts.hf), parts.lf, f_low);
  return adaptive_fuse(aggregated, detail);
}

}  // namespace ossdet::model
