#include "ossdet/model/object_mask.hpp"

#include <algorithm>

namespace ossdet::model {

using namespace tensor;

ObjectMask::ObjectMask(ParamStore& ps, std::size_t channels, const std::string& prefix) {
  conv1 = Conv::make(ps, prefix + "/conv1", channels, channels, 3);
  conv2 = Conv::make(ps, prefix + "/conv2", channels, 1, 3);
}

Tensor ObjectMask::predict(const Tensor& f) const { return sigmoid(conv2(relu(conv1(f)))); }

Tensor apply_mask(const Tensor& f, const Tensor& m_p) {
  if (m_p.shape().c != 1) throw ShapeError("mask must have one channel, got " + m_p.shape().str());
  return mul(f, m_p);
}

ActivationLoss activation_loss(const Tensor& m_p, std::span<const double> m_g, double gamma, double eps) {
  const Shape s = m_p.shape();
  if (m_g.size() != s.numel()) {
    throw ShapeError("activation_loss: mask " + s.str() + " vs ground truth of " +
                     std::to_string(m_g.size()) + " values");
  }
  const std::size_t per = s.item();
  const auto mp = m_p.data();
  struct Sums {
    double sg, sp, inter, diff;
    bool has_fg;
  };
  auto sums = std::make_shared<std::vector<Sums>>(s.n);
  double li = 0, ld = 0;
  for (std::size_t n = 0; n < s.n; ++n) {
    Sums& z = (*sums)[n];
    z = {0, 0, 0, 0, false};
    for (std::size_t j = n * per; j < (n + 1) * per; ++j) {
      z.sg += m_g[j];
      z.sp += mp[j];
      z.inter += mp[j] * m_g[j];
      if (m_g[j] > 0) {
        z.has_fg = true;
      } else {
        z.diff += mp[j];
      }
    }
    if (z.has_fg) li += 1.0 - z.inter / std::max(z.sg, eps);
    ld += z.diff / std::max(z.sp, eps);
  }
  const double inv_n = 1.0 / double(s.n);
  li *= inv_n;
  ld *= inv_n;
  std::vector<double> g_copy(m_g.begin(), m_g.end());
  Tensor packed = make_op(
      "activation_loss", Shape{1, 3, 1, 1}, {li, ld, li + gamma * ld}, {m_p},
      [s, sums, gamma, eps, inv_n, g = std::move(g_copy)](const GradContext& ctx) {
        const auto go = ctx.out_grad();
        const double g_i = go[0] + go[2];
        const double g_d = go[1] + gamma * go[2];
        const auto gp = ctx.input_grad(0);
        const std::size_t per = s.item();
        for (std::size_t n = 0; n < s.n; ++n) {
          const Sums& z = (*sums)[n];
          const double dg = std::max(z.sg, eps);
          const double dp = std::max(z.sp, eps);
          // The guarded denominator is constant once it sits at eps.
          const double ddp = z.sp > eps ? z.diff / (dp * dp) : 0.0;
          for (std::size_t j = n * per; j < (n + 1) * per; ++j) {
            double v = 0;
            if (z.has_fg) v -= g_i * g[j] / dg;
            double bg = g[j] > 0 ? 0.0 : 1.0;
            v += g_d * (bg / dp - ddp);
            gp[j] += inv_n * v;
          }
        }
      });
  return {slice_channels(packed, 0, 1), slice_channels(packed, 1, 1), slice_channels(packed, 2, 1)};
}

}  // namespace ossdet::model
