#include "ossdet/app/verify.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numbers>
#include <random>

#include "ossdet/eval/map.hpp"
#include "ossdet/model/cafr.hpp"
#include "ossdet/model/cssp.hpp"
#include "ossdet/model/detect_head.hpp"
#include "ossdet/model/object_mask.hpp"
#include "ossdet/model/sacf.hpp"
#include "ossdet/simd/kernels.hpp"

namespace ossdet::app {

using namespace tensor;
using geom::OrientedBox;
using model::ParamStore;

namespace {

Tensor rand_t(Shape s, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(s.numel());
  for (double& x : v) x = u(rng);
  return Tensor::from(s, std::move(v), true);
}

void randomize(ParamStore& ps, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& p : ps.params())
    for (double& v : p.tensor.data_mut()) v = u(rng);
}

std::vector<Tensor> with_params(std::vector<Tensor> in, const ParamStore& ps) {
  for (const auto& p : ps.params()) in.push_back(p.tensor);
  return in;
}

class Suite {
 public:
  Suite(std::uint64_t seed, std::vector<GradCase>& out) : rng(seed), out_(out) {}

  void check(const char* module, const char* op, const Shape& s, const GradClosure& f, std::vector<Tensor> in,
             std::size_t max_coords = 0) {
    GradCheckOptions opt;
    opt.max_coords_per_input = max_coords;
    opt.seed = rng();
    out_.push_back({module, op, s.str(), grad_check(f, std::move(in), opt)});
  }

  std::size_t dim(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); }

  std::mt19937_64 rng;

 private:
  std::vector<GradCase>& out_;
};

void tensor_ops(Suite& t) {
  const std::size_t n = t.dim(1, 2), c = t.dim(1, 4), h = 2 * t.dim(1, 3), w = 2 * t.dim(1, 3);
  const Shape s{n, c, h, w};
  auto& rng = t.rng;
  for (std::size_t stride : {1u, 2u}) {
    const std::size_t k = stride == 1 ? 3 : 1 + 2 * t.dim(0, 1);
    t.check("tensor-core", stride == 1 ? "conv2d" : "conv2d/stride2", s,
            [stride](std::span<const Tensor> in) { return conv2d(in[0], in[1], in[2], stride); },
            {rand_t(s, rng), rand_t({3, c, k, k}, rng), rand_t({1, 3, 1, 1}, rng)});
  }
  t.check("tensor-core", "sigmoid", s, [](std::span<const Tensor> in) { return sigmoid(scale(in[0], 3)); }, {rand_t(s, rng)});
  t.check("tensor-core", "tanh", s, [](std::span<const Tensor> in) { return tanh(scale(in[0], 2)); }, {rand_t(s, rng)});
  // Values stay clear of the kink so central differences are exact there.
  Tensor r = rand_t(s, rng, 0.05, 1.0);
  for (std::size_t i = 0; i < r.numel(); i += 2) r.data_mut()[i] = -r.data()[i];
  t.check("tensor-core", "relu", s, [](std::span<const Tensor> in) { return relu(in[0]); }, {r});
  t.check("tensor-core", "pool/gap", s, [](std::span<const Tensor> in) { return pool(in[0], PoolKind::gap); }, {rand_t(s, rng)});
  t.check("tensor-core", "pool/avg3x3s2", s, [](std::span<const Tensor> in) { return pool(in[0], PoolKind::avg3x3s2); },
          {rand_t(s, rng)});
  t.check("tensor-core", "pool/channel_mean", s,
          [](std::span<const Tensor> in) { return pool(in[0], PoolKind::channel_mean); }, {rand_t(s, rng)});
  t.check("tensor-core", "upsample2x", s, [](std::span<const Tensor> in) { return upsample2x(in[0]); }, {rand_t(s, rng)});
  const std::size_t k = t.dim(1, 4), m = t.dim(1, 4);
  t.check("tensor-core", "matmul", {n, 1, h, k}, [](std::span<const Tensor> in) { return matmul(in[0], in[1]); },
          {rand_t({n, 1, h, k}, rng), rand_t({n, 1, k, m}, rng)});
  t.check("tensor-core", "matmul/trans_a", {n, 1, k, h},
          [](std::span<const Tensor> in) { return matmul(in[0], in[1], true, false); },
          {rand_t({n, 1, k, h}, rng), rand_t({n, 1, k, m}, rng)});
  t.check("tensor-core", "matmul/trans_b", {n, 1, h, k},
          [](std::span<const Tensor> in) { return matmul(in[0], in[1], false, true); },
          {rand_t({n, 1, h, k}, rng), rand_t({n, 1, m, k}, rng)});
  for (int axis : {1, 2, 3}) {
    static const char* names[] = {"", "softmax/c", "softmax/h", "softmax/w"};
    t.check("tensor-core", names[axis], s, [axis](std::span<const Tensor> in) { return softmax(scale(in[0], 2), axis); },
            {rand_t(s, rng)});
  }
  t.check("tensor-core", "concat+slice", s,
          [](std::span<const Tensor> in) {
            const std::vector<Tensor> parts{in[0], tanh(in[1])};
            return slice_channels(concat_channels(parts), 1, 2);
          },
          {rand_t(s, rng), rand_t({n, 2, h, w}, rng)});
  t.check("tensor-core", "fc", {n, c, 1, 1}, [](std::span<const Tensor> in) { return fc(in[0], in[1], in[2]); },
          {rand_t({n, c, 1, 1}, rng), rand_t({m, c, 1, 1}, rng), rand_t({1, m, 1, 1}, rng)});
  t.check("tensor-core", "reshape", s,
          [s](std::span<const Tensor> in) { return tanh(reshape(in[0], Shape{s.n, 1, s.c, s.h * s.w})); },
          {rand_t(s, rng)});
  t.check("tensor-core", "add/sub broadcast", s,
          [](std::span<const Tensor> in) { return sub(add(in[0], in[1]), scale(in[0], 0.3)); },
          {rand_t(s, rng), rand_t({1, c, 1, 1}, rng)});
  t.check("tensor-core", "mul broadcast", s, [](std::span<const Tensor> in) { return mul(mul(in[0], in[1]), in[2]); },
          {rand_t(s, rng), rand_t({n, c, 1, 1}, rng), rand_t({1, 1, h, w}, rng)});
  t.check("tensor-core", "div", s, [](std::span<const Tensor> in) { return div(in[0], in[1]); },
          {rand_t(s, rng), rand_t({n, 1, h, w}, rng, 0.5, 2.0)});
  t.check("tensor-core", "scale/add_scalar/sum/mean", s,
          [](std::span<const Tensor> in) { return add(sum(add_scalar(scale(in[0], -1.7), 0.4)), mean(tanh(in[0]))); },
          {rand_t(s, rng)});
  t.check("tensor-core", "frobenius_normalize", s,
          [](std::span<const Tensor> in) { return frobenius_normalize(in[0], 1e-8); }, {rand_t(s, rng)});
}

void cssp_ops(Suite& t) {
  auto& rng = t.rng;
  const std::size_t n = t.dim(1, 2), c = t.dim(1, 4), h = t.dim(1, 3), w = t.dim(1, 3);
  const Shape s{n, c, h, w};
  t.check("cssp", "spectral_attention", s,
          [](std::span<const Tensor> in) { return model::spectral_attention(in[0], in[1], in[2]); },
          {rand_t(s, rng), rand_t({1, c, 1, 1}, rng, -2, 2), rand_t({1, c, 1, 1}, rng)});
  t.check("cssp", "spatial_attention", s,
          [](std::span<const Tensor> in) { return model::spatial_attention(in[0], in[1], in[2]); },
          {rand_t(s, rng), rand_t({1, 1, h, w}, rng, -2, 2), rand_t({1, 1, h, w}, rng)});
  t.check("cssp", "cross_modulate", s,
          [](std::span<const Tensor> in) {
            auto m = model::cross_modulate(in[0], in[1], 1e-8);
            return add(m.a_hat, scale(m.e_hat, 0.6));
          },
          {rand_t(s, rng), rand_t(s, rng)});
  ParamStore ps(rng());
  model::Cssp cssp(ps, {c, h, w, t.dim(0, 1) ? model::CsspFusion::sum : model::CsspFusion::concat_conv, 1e-8});
  randomize(ps, rng);
  t.check("cssp", "cssp block", s, [&](std::span<const Tensor> in) { return cssp.forward(in[0]); },
          with_params({rand_t(s, rng)}, ps));
}

void sacf_ops(Suite& t) {
  auto& rng = t.rng;
  const std::size_t n = t.dim(1, 2), c = t.dim(1, 3), h = t.dim(1, 3), w = t.dim(1, 3);
  const std::size_t k = 3 + 2 * t.dim(0, 3);
  const Shape hi{n, c, h, w}, lo{n, c, 2 * h, 2 * w};
  t.check("sacf", "sfa_aggregate", hi,
          [k](std::span<const Tensor> in) { return model::sfa_aggregate(in[0], k); }, {rand_t(lo, rng)});
  t.check("sacf", "sde_decompose", lo,
          [](std::span<const Tensor> in) {
            auto p = model::sde_decompose(in[0]);
            return add(sum(tanh(p.lf)), sum(mul(p.hf, p.hf)));
          },
          {rand_t(lo, rng)});
  ParamStore ps(rng());
  model::Sacf sacf(ps, {c, k, 1e-8}, "sacf");
  randomize(ps, rng);
  t.check("sacf", "sde_enhance", lo, [&](std::span<const Tensor> in) { return sacf.sde_enhance(in[0]); },
          with_params({rand_t(lo, rng)}, ps));
  t.check("sacf", "sde_fuse", lo,
          [&](std::span<const Tensor> in) { return sacf.sde_fuse(in[0], in[1], in[2]); },
          with_params({rand_t(lo, rng), rand_t(hi, rng), rand_t(lo, rng)}, ps));
  t.check("sacf", "adaptive_fuse", lo,
          [&](std::span<const Tensor> in) { return sacf.adaptive_fuse(in[0], in[1]); },
          with_params({rand_t(hi, rng), rand_t(lo, rng)}, ps));
  t.check("sacf", "sacf block", lo, [&](std::span<const Tensor> in) { return sacf.forward(in[0], in[1]); },
          with_params({rand_t(hi, rng), rand_t(lo, rng)}, ps));
}

void mask_ops(Suite& t) {
  auto& rng = t.rng;
  const std::size_t n = t.dim(1, 2), c = t.dim(1, 3), h = t.dim(2, 5), w = t.dim(2, 5);
  const Shape s{n, c, h, w}, ms{n, 1, h, w};
  ParamStore ps(rng());
  model::ObjectMask mask(ps, c);
  randomize(ps, rng);
  t.check("object-mask", "predict_mask", s, [&](std::span<const Tensor> in) { return mask.predict(in[0]); },
          with_params({rand_t(s, rng)}, ps));
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> g(ms.numel(), 0.0);
  for (double& v : g)
    if (u(rng) < 0.4) v = 0.05 + 0.95 * u(rng);
  const double gamma = 0.1 + u(rng);
  t.check("object-mask", "activation_loss", ms,
          [g, gamma](std::span<const Tensor> in) {
            auto l = model::activation_loss(sigmoid(in[0]), g, gamma);
            return add(add(l.l_act, scale(l.l_i, 0.5)), scale(l.l_d, -0.8));
          },
          {rand_t(ms, rng, -2, 2)});
  t.check("object-mask", "apply_mask", s, [](std::span<const Tensor> in) { return model::apply_mask(in[0], in[1]); },
          {rand_t(s, rng), rand_t(ms, rng, 0, 1)});
}

void cafr_ops(Suite& t) {
  auto& rng = t.rng;
  const std::size_t n = t.dim(1, 2), c = t.dim(1, 4), h = t.dim(1, 3), w = t.dim(1, 3);
  const auto axis = t.dim(0, 1) ? model::SoftmaxAxis::row : model::SoftmaxAxis::col;
  t.check("cafr", "cafr_weights", {n, c, 1, 1},
          [axis](std::span<const Tensor> in) {
            auto wts = model::cafr_weights(in[0], in[1], axis);
            return add(wts.w_high, scale(wts.w_low, 1.3));
          },
          {rand_t({n, c, 1, 1}, rng, -2, 2), rand_t({n, c, 1, 1}, rng, -2, 2)});
  ParamStore ps(rng());
  model::Cafr cafr(ps, {c, axis}, "cafr");
  randomize(ps, rng);
  t.check("cafr", "cafr block", {n, c, h, w}, [&](std::span<const Tensor> in) { return cafr.forward(in[0], in[1]); },
          with_params({rand_t({n, c, h, w}, rng), rand_t({n, c, 2 * h, 2 * w}, rng)}, ps));
}

void head_ops(Suite& t) {
  auto& rng = t.rng;
  const std::size_t n = t.dim(1, 2), k = t.dim(1, 3), h = t.dim(2, 4), w = t.dim(2, 4);
  const Shape cs{n, k, h, w}, rs{n, 6, h, w};
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> targets(cs.numel()), weight(n * h * w), reg(rs.numel());
  for (double& v : targets) v = u(rng) < 0.3 ? 1.0 : 0.0;
  for (double& v : weight) v = u(rng) < 0.5 ? 1.0 : 0.0;
  for (double& v : reg) v = 2 * u(rng) - 1;
  t.check("detect-head", "focal_loss", cs,
          [targets](std::span<const Tensor> in) { return model::focal_loss_sum(in[0], targets, 0.25, 2.0); },
          {rand_t(cs, rng, -3, 3)});
  t.check("detect-head", "smooth_l1", rs,
          [reg, weight](std::span<const Tensor> in) { return model::smooth_l1_sum(in[0], reg, weight, 1.0 / 9); },
          {rand_t(rs, rng, -2, 2)});
  model::HeadConfig cfg;
  cfg.channels = t.dim(1, 3);
  cfg.num_classes = k;
  ParamStore ps(rng());
  model::DetectHead head(ps, cfg);
  randomize(ps, rng);
  std::vector<Shape> shapes;
  std::vector<std::array<std::size_t, 2>> grids;
  for (std::size_t l = 0; l < 4; ++l) {
    shapes.push_back({n, cfg.channels, std::max<std::size_t>(1, 8 >> l), std::max<std::size_t>(1, 8 >> l)});
    grids.push_back({shapes.back().h, shapes.back().w});
  }
  std::uniform_real_distribution<double> pos(2, 30), len(3, 40), ang(-1.5, 1.5);
  std::vector<std::vector<OrientedBox>> boxes(n);
  for (auto& b : boxes)
    for (int i = 0; i < 3; ++i)
      b.push_back(geom::canonicalize(OrientedBox::make(pos(rng), pos(rng), len(rng), len(rng), ang(rng), int(rng() % k))));
  const auto tg = model::assign_targets(boxes, grids, cfg);
  std::vector<Tensor> inputs;
  for (const Shape& s : shapes) inputs.push_back(rand_t(s, rng));
  t.check("detect-head", "head + detection_loss", shapes[0],
          [&](std::span<const Tensor> in) {
            auto out = head.forward(in.subspan(0, 4));
            return model::detection_loss(out, tg, cfg).total;
          },
          with_params(inputs, ps), 12);
  t.check("detect-head", "total_loss", {1, 1, 1, 1},
          [](std::span<const Tensor> in) { return model::total_loss(in[0], in[1], 0.6); },
          {rand_t({1, 1, 1, 1}, rng), rand_t({1, 1, 1, 1}, rng)});
}

std::string fmt(const char* p, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, p, v);
  return buf;
}

void push(std::vector<Check>& out, const char* module, const char* what, bool ok, std::string detail) {
  out.push_back({module, what, ok, std::move(detail)});
}

void identities(std::vector<Check>& out, std::mt19937_64& rng) {
  {
    Tensor f = rand_t({2, 3, 8, 6}, rng, -4, 4);
    auto p = model::sde_decompose(f);
    Tensor up = upsample2x(p.lf);
    double worst = 0;
    for (std::size_t i = 0; i < f.numel(); ++i) {
      const double scale = std::max({std::abs(f.data()[i]), std::abs(up.data()[i]), 1e-300});
      worst = std::max(worst, std::abs(up.data()[i] + p.hf.data()[i] - f.data()[i]) / scale);
    }
    push(out, "sacf", "reconstruction US(lf) + hf = F", worst <= 2 * std::numeric_limits<double>::epsilon(),
         "max rel residual " + fmt("%.3g", worst));
  }
  {
    double worst = 0;
    for (std::size_t k : {3u, 5u, 7u, 9u}) {
      Tensor x = rand_t({2, 4, 7, 5}, rng, -3, 3);
      const auto w = model::sfa_weights(x, k);
      const std::size_t kk = k * k, hw = 35;
      for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t p = 0; p < hw; ++p) {
          double s = 0;
          for (std::size_t o = 0; o < kk; ++o) s += w[(n * kk + o) * hw + p];
          worst = std::max(worst, std::abs(s - 1));
        }
    }
    push(out, "sacf", "SFA weights sum to 1", worst <= 1e-12, "max |sum - 1| " + fmt("%.3g", worst));
  }
  {
    bool exact = true;
    for (double v : {0.0, 0.37, -2.5, 1e-3}) {
      Tensor y = model::sfa_aggregate(Tensor::full({1, 3, 5, 4}, v), 3);
      for (double o : y.data()) exact = exact && o == 2 * v;
    }
    push(out, "sacf", "SFA of a constant map is 2x", exact, exact ? "bit-exact" : "mismatch");
  }
  {
    ParamStore ps(1);
    model::Sacf sacf(ps, {3, 3, 1e-8}, "s");
    Tensor f = rand_t({1, 3, 6, 6}, rng);
    auto p = model::sde_decompose(f);
    Tensor o = sacf.sde_fuse(sacf.sde_enhance(p.hf), p.lf, f);
    bool exact = true;
    for (std::size_t i = 0; i < f.numel(); ++i) exact = exact && o.data()[i] == f.data()[i];
    push(out, "sacf", "zero-init SDE is the identity", exact, exact ? "bit-exact" : "mismatch");
  }
  {
    Tensor v1 = rand_t({2, 6, 1, 1}, rng, -3, 3), v2 = rand_t({2, 6, 1, 1}, rng, -3, 3);
    auto w = model::cafr_weights(v1, v2, model::SoftmaxAxis::row);
    double worst = 0;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < 6; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 6; ++j) s += w.attention.at(n, 0, i, j);
        worst = std::max(worst, std::abs(s - 1));
      }
    push(out, "cafr", "attention rows sum to 1", worst <= 1e-12, "max |sum - 1| " + fmt("%.3g", worst));
  }
  {
    std::uniform_real_distribution<double> u(0, 1);
    const Shape s{1, 1, 9, 9};
    std::vector<double> g(81, 0.0);
    for (double& v : g)
      if (u(rng) < 0.35) v = 0.1 + 0.9 * u(rng);
    g[40] = 1.0;
    std::vector<double> hit(81), ones(81, 1.0), zeros(81, 0.0);
    std::size_t bg = 0;
    for (std::size_t i = 0; i < 81; ++i) {
      hit[i] = g[i] > 0 ? 1.0 : 0.0;
      bg += g[i] > 0 ? 0 : 1;
    }
    auto l_hit = model::activation_loss(Tensor::from(s, hit), hit, 0.1);
    auto l_one = model::activation_loss(Tensor::from(s, ones), g, 0.1);
    auto l_zero = model::activation_loss(Tensor::from(s, zeros), g, 0.1);
    push(out, "object-mask", "perfect binary mask gives L_act = 0", l_hit.l_act.item() == 0.0,
         "L_act " + fmt("%.3g", l_hit.l_act.item()));
    push(out, "object-mask", "all-ones mask: L_I = 0, L_D = background fraction",
         l_one.l_i.item() == 0.0 && l_one.l_d.item() == double(bg) / 81.0,
         "L_I " + fmt("%.3g", l_one.l_i.item()) + ", L_D " + fmt("%.17g", l_one.l_d.item()));
    push(out, "object-mask", "all-zeros mask: L_I = 1, L_D = 0",
         l_zero.l_i.item() == 1.0 && l_zero.l_d.item() == 0.0,
         "L_I " + fmt("%.3g", l_zero.l_i.item()) + ", L_D " + fmt("%.3g", l_zero.l_d.item()));
    bool bounded = true;
    for (int trial = 0; trial < 50; ++trial) {
      Tensor mp = rand_t(s, rng, 1e-6, 1 - 1e-6);
      auto l = model::activation_loss(mp, g, 0.1);
      bounded = bounded && l.l_i.item() >= 0 && l.l_i.item() <= 1 && l.l_d.item() >= 0 && l.l_d.item() <= 1;
    }
    push(out, "object-mask", "L_I, L_D in [0, 1] on random masks", bounded, "50 draws");
  }
  {
    const OrientedBox sq = OrientedBox::make(0, 0, 1, 1, 0);
    const double same = geom::rotated_iou(sq, sq);
    const double r90 = geom::rotated_iou(sq, OrientedBox::make(0, 0, 1, 1, std::numbers::pi / 2));
    const double r45 = geom::rotated_iou(sq, OrientedBox::make(0, 0, 1, 1, std::numbers::pi / 4));
    const double want = 2 * (std::sqrt(2.0) - 1) / (2 - 2 * (std::sqrt(2.0) - 1));
    push(out, "eval-oriented", "IoU of identical boxes is 1", std::abs(same - 1) <= 1e-12, fmt("%.17g", same));
    push(out, "eval-oriented", "IoU under 90 degree rotation is 1", std::abs(r90 - 1) <= 1e-12, fmt("%.17g", r90));
    push(out, "eval-oriented", "IoU under 45 degree rotation (octagon)", std::abs(r45 - want) <= 1e-6,
         fmt("%.9f", r45) + " vs " + fmt("%.9f", want));
    std::uniform_real_distribution<double> p(-5, 5), l(0.5, 6), a(-1.6, 1.6);
    double asym = 0;
    for (int i = 0; i < 200; ++i) {
      auto b1 = OrientedBox::make(p(rng), p(rng), l(rng), l(rng), a(rng));
      auto b2 = OrientedBox::make(p(rng) / 3, p(rng) / 3, l(rng), l(rng), a(rng));
      asym = std::max(asym, std::abs(geom::rotated_iou(b1, b2) - geom::rotated_iou(b2, b1)));
    }
    push(out, "eval-oriented", "IoU is symmetric", asym <= 1e-12, "max asymmetry " + fmt("%.3g", asym));
  }
  {
    std::vector<std::vector<OrientedBox>> gts = {{OrientedBox::make(10, 10, 8, 4, 0.2, 0), OrientedBox::make(30, 30, 9, 5, 1, 1)}};
    auto dets = gts;
    for (auto& b : dets[0]) b.score = 0.9;
    auto r = eval::evaluate(dets, gts, {"a", "b"});
    push(out, "eval-oriented", "perfect detections give mAP = 1", r.map50 == 1 && r.map75 == 1 && r.map == 1,
         "mAP " + fmt("%.3g", r.map));
    auto none = eval::evaluate(std::vector<std::vector<OrientedBox>>(1), gts, {"a", "b"});
    push(out, "eval-oriented", "no detections give mAP = 0", none.map50 == 0, "mAP50 " + fmt("%.3g", none.map50));
  }
  {
    const simd::KernelTable* avx = simd::avx2_kernels();
    if (!avx) {
      push(out, "tensor-core", "AVX2 GEMM matches scalar reference", true, "AVX2 unavailable; scalar only");
    } else {
      std::uniform_real_distribution<double> u(-1, 1);
      const std::size_t m = 37, n = 29, k = 41;
      std::vector<double> a(m * k), b(k * n), c1(m * n, 0.0), c2(m * n, 0.0);
      for (double& v : a) v = u(rng);
      for (double& v : b) v = u(rng);
      simd::scalar_kernels().gemm_nn(m, n, k, a.data(), k, b.data(), n, c1.data(), n);
      avx->gemm_nn(m, n, k, a.data(), k, b.data(), n, c2.data(), n);
      double worst = 0;
      for (std::size_t i = 0; i < c1.size(); ++i) worst = std::max(worst, std::abs(c1[i] - c2[i]));
      push(out, "tensor-core", "AVX2 GEMM matches scalar reference", worst <= 1e-12, "max diff " + fmt("%.3g", worst));
    }
  }
}

}  // namespace

std::vector<GradCase> gradient_suite(std::uint64_t seed, std::size_t rounds) {
  std::vector<GradCase> out;
  Suite s(seed, out);
  for (std::size_t r = 0; r < rounds; ++r) {
    tensor_ops(s);
    cssp_ops(s);
    sacf_ops(s);
    mask_ops(s);
    cafr_ops(s);
    head_ops(s);
  }
  return out;
}

std::vector<Check> run_verify(std::uint64_t seed, std::size_t rounds) {
  std::vector<Check> out;
  // One row per (module, operator), aggregating every round.
  struct Agg {
    std::size_t row = 0, cases = 0, coords = 0;
    double worst = 0;
    std::string worst_shape, failure;
  };
  std::map<std::pair<std::string, std::string>, Agg> rows;
  for (const GradCase& g : gradient_suite(seed, rounds)) {
    auto [it, fresh] = rows.try_emplace({g.module, g.op});
    if (fresh) {
      it->second.row = out.size();
      out.push_back({g.module, "gradient: " + g.op, true, ""});
    }
    Agg& a = it->second;
    ++a.cases;
    a.coords += g.report.coords_checked;
    if (g.report.max_rel_error >= a.worst) {
      a.worst = g.report.max_rel_error;
      a.worst_shape = g.shape;
    }
    if (!g.report.passed && a.failure.empty()) a.failure = g.report.summary() + " at " + g.shape;
    out[a.row].passed = out[a.row].passed && g.report.passed;
  }
  std::size_t cases = 0;
  for (auto& [key, a] : rows) {
    cases += a.cases;
    out[a.row].detail = a.failure.empty() ? std::to_string(a.cases) + " shapes, " + std::to_string(a.coords) +
                                                " coords, max rel err " + fmt("%.3g", a.worst) + " at " + a.worst_shape
                                          : a.failure;
  }
  out.push_back({"tensor-core", "gradient suite covers >= 50 random shapes", cases >= 50,
                 std::to_string(cases) + " shapes"});
  std::mt19937_64 rng(seed ^ 0x51deULL);
  identities(out, rng);
  return out;
}

std::string format_table(const std::vector<Check>& checks) {
  std::size_t wm = 6, wi = 9;
  for (const auto& c : checks) {
    wm = std::max(wm, c.module.size());
    wi = std::max(wi, c.invariant.size());
  }
  std::string out;
  auto line = [&](const std::string& m, const std::string& i, const std::string& r, const std::string& d) {
    out += m + std::string(wm - m.size() + 2, ' ') + i + std::string(wi - i.size() + 2, ' ') + r + "  " + d + "\n";
  };
  line("module", "invariant", "result", "detail");
  std::size_t failed = 0;
  for (const auto& c : checks) {
    line(c.module, c.invariant, c.passed ? "PASS  " : "FAIL  ", c.detail);
    failed += c.passed ? 0 : 1;
  }
  out += std::to_string(checks.size() - failed) + "/" + std::to_string(checks.size()) + " checks passed\n";
  return out;
}

}  // namespace ossdet::app
