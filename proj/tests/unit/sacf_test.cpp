#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "ossdet/model/sacf.hpp"
#include "ossdet/tensor/grad_check.hpp"
#include "test_util.hpp"

using namespace ossdet;
using namespace ossdet::tensor;
using namespace ossdet::model;
using testutil::idx;
using testutil::random_tensor;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Softmax-of-negative-distance aggregation written directly from the
// definition: out = sum_q e_q q + p over the clamped k x k window.
std::vector<double> naive_sfa(const Tensor& x, std::size_t k) {
  const Shape s = x.shape();
  const long r = long(k / 2);
  std::vector<double> out(s.numel());
  auto clampi = [](long v, std::size_t n) { return std::size_t(std::clamp(v, 0L, long(n) - 1)); };
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < s.h; ++i)
      for (std::size_t j = 0; j < s.w; ++j) {
        std::vector<double> e;
        std::vector<std::pair<std::size_t, std::size_t>> q;
        for (long dm = -r; dm <= r; ++dm)
          for (long dn = -r; dn <= r; ++dn) {
            const std::size_t qi = clampi(long(i) + dm, s.h), qj = clampi(long(j) + dn, s.w);
            double d2 = 0;
            for (std::size_t c = 0; c < s.c; ++c) {
              const double d = x.at(n, c, i, j) - x.at(n, c, qi, qj);
              d2 += d * d;
            }
            e.push_back(std::exp(-std::sqrt(d2)));
            q.emplace_back(qi, qj);
          }
        double z = 0;
        for (double v : e) z += v;
        for (std::size_t c = 0; c < s.c; ++c) {
          double acc = x.at(n, c, i, j);
          for (std::size_t o = 0; o < e.size(); ++o) acc += e[o] / z * x.at(n, c, q[o].first, q[o].second);
          out[idx(s, n, c, i, j)] = acc;
        }
      }
  return out;
}

// Mean of in-bounds cells of 3x3 windows at stride 2, then nearest upsampling.
std::vector<double> naive_lowpass(const std::vector<double>& f, std::size_t h, std::size_t w) {
  std::vector<double> lf((h / 2) * (w / 2));
  for (std::size_t oy = 0; oy < h / 2; ++oy)
    for (std::size_t ox = 0; ox < w / 2; ++ox) {
      double acc = 0;
      int cnt = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const long y = long(2 * oy) + dy, x = long(2 * ox) + dx;
          if (y < 0 || x < 0 || y >= long(h) || x >= long(w)) continue;
          acc += f[std::size_t(y) * w + std::size_t(x)];
          ++cnt;
        }
      lf[oy * (w / 2) + ox] = acc / cnt;
    }
  return lf;
}

struct Fixture {
  ParamStore ps{11};
  Sacf sacf;
  explicit Fixture(std::size_t c, std::size_t k = 3) : sacf(ps, {.channels = c, .k = k}, "sacf") {}
};

}  // namespace

TEST(Sfa, ConstantMapDoublesExactly) {
  for (std::size_t k : {3u, 5u, 9u}) {
    Tensor x = Tensor::full({1, 3, 5, 4}, 0.3712);
    Tensor y = sfa_aggregate(x, k);
    for (double v : y.data()) EXPECT_EQ(v, 2 * 0.3712);
  }
}

TEST(Sfa, TwoOnesPatchFixture) {
  // 3x3 field: centre and its right neighbour are 1, the rest 0.
  std::vector<double> v(9, 0.0);
  v[4] = 1.0;
  v[5] = 1.0;
  Tensor y = sfa_aggregate(Tensor::from({1, 1, 3, 3}, v), 3);
  const double z = 2 + 7 * std::exp(-1.0);
  EXPECT_NEAR(y.at(0, 0, 1, 1), 2 / z + 1, 1e-15);
  EXPECT_NEAR(y.at(0, 0, 1, 1), 1.4371, 1e-4);
}

TEST(Sfa, IsolatedImpulseFixture) {
  std::vector<double> v(25, 0.0);
  v[12] = 1.0;
  Tensor y = sfa_aggregate(Tensor::from({1, 1, 5, 5}, v), 3);
  const double z = 1 + 8 * std::exp(-1.0);
  EXPECT_NEAR(y.at(0, 0, 2, 2), 1 / z + 1, 1e-15);
  EXPECT_NEAR(y.at(0, 0, 2, 2), 1.2536, 1e-4);
}

TEST(Sfa, MatchesNaiveAggregationWithClampedBorders) {
  std::mt19937_64 rng(12);
  for (std::size_t k : {3u, 5u, 7u}) {
    Tensor x = random_tensor({2, 3, 4, 5}, rng, -1, 1, false);
    const auto want = naive_sfa(x, k);
    Tensor y = sfa_aggregate(x, k);
    EXPECT_LT(testutil::max_abs_diff(y.data(), want), 1e-14) << "k=" << k;
  }
}

TEST(Sfa, WeightsSumToOnePerPixel) {
  std::mt19937_64 rng(13);
  for (std::size_t k : {3u, 5u, 7u, 9u}) {
    Tensor x = random_tensor({2, 4, 6, 5}, rng, -3, 3, false);
    const auto w = sfa_weights(x, k);
    const std::size_t kk = k * k, hw = 30;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t p = 0; p < hw; ++p) {
        double s = 0;
        for (std::size_t o = 0; o < kk; ++o) {
          const double e = w[(n * kk + o) * hw + p];
          EXPECT_GT(e, 0.0);
          s += e;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
  }
}

TEST(Sfa, TransposeCovariance) {
  std::mt19937_64 rng(14);
  const Shape s{1, 3, 4, 6};
  Tensor x = random_tensor(s, rng, -1, 1, false);
  std::vector<double> t(s.numel());
  const Shape ts{1, 3, 6, 4};
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 6; ++j) t[idx(ts, 0, c, j, i)] = x.at(0, c, i, j);
  Tensor y = sfa_aggregate(x, 3), yt = sfa_aggregate(Tensor::from(ts, t), 3);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(yt.at(0, c, j, i), y.at(0, c, i, j), 1e-14);
}

TEST(Sfa, RejectsEvenPatch) {
  EXPECT_THROW(sfa_aggregate(Tensor::zeros({1, 1, 4, 4}), 4), std::invalid_argument);
  ParamStore ps;
  EXPECT_THROW(Sacf(ps, {.channels = 2, .k = 2}, "s"), std::invalid_argument);
}

TEST(Sde, ReconstructionIsExact) {
  std::mt19937_64 rng(15);
  Tensor f = random_tensor({2, 3, 6, 8}, rng, -5, 5, false);
  FrequencySplit parts = sde_decompose(f);
  Tensor up = upsample2x(parts.lf);
  Tensor back = add(up, parts.hf);
  // (f - u) + u rounds twice; the residual stays within one unit of the larger operand.
  for (std::size_t i = 0; i < f.numel(); ++i) {
    const double scale = std::max(std::abs(f.data()[i]), std::abs(up.data()[i]));
    EXPECT_LE(std::abs(back.data()[i] - f.data()[i]), 2 * std::numeric_limits<double>::epsilon() * scale);
  }
}

TEST(Sde, ConstantMapHasNoDetail) {
  FrequencySplit parts = sde_decompose(Tensor::full({1, 2, 4, 4}, 0.25));
  for (double v : parts.lf.data()) EXPECT_EQ(v, 0.25);
  for (double v : parts.hf.data()) EXPECT_EQ(v, 0.0);
}

TEST(Sde, ImpulseFixture) {
  std::vector<double> v(16, 0.0);
  v[0] = 1.0;
  FrequencySplit parts = sde_decompose(Tensor::from({1, 1, 4, 4}, v));
  const auto lf = naive_lowpass(v, 4, 4);
  ASSERT_EQ(parts.lf.numel(), 4u);
  EXPECT_DOUBLE_EQ(lf[0], 0.25);  // corner window has 4 valid cells
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(parts.lf.data()[i], lf[i]);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      EXPECT_EQ(parts.hf.at(0, 0, y, x), v[y * 4 + x] - lf[(y / 2) * 2 + x / 2]);
}

TEST(Sde, RejectsOddDims) {
  EXPECT_THROW(sde_decompose(Tensor::zeros({1, 1, 5, 4})), ShapeError);
}

TEST(Sde, EnhanceGainBounds) {
  std::mt19937_64 rng(16);
  Fixture fx(3);
  testutil::randomize(fx.ps, rng, -2, 2);
  Tensor hf = random_tensor({1, 3, 4, 4}, rng, -1, 1, false);
  Tensor out = fx.sacf.sde_enhance(hf);
  for (std::size_t i = 0; i < hf.numel(); ++i) {
    const double a = std::abs(hf.data()[i]), b = std::abs(out.data()[i]);
    EXPECT_GT(b, a);
    EXPECT_LT(b, 2 * a);
  }
  for (double v : testutil::values(fx.sacf.sde_enhance(Tensor::zeros({1, 3, 2, 2})))) EXPECT_EQ(v, 0.0);
}

TEST(Sde, ZeroKernelGivesHalfGain) {
  std::mt19937_64 rng(17);
  Fixture fx(2);
  for (double& v : fx.sacf.enhance.weight.data_mut()) v = 0.0;
  Tensor hf = random_tensor({1, 2, 2, 2}, rng, -1, 1, false);
  Tensor out = fx.sacf.sde_enhance(hf);
  for (std::size_t i = 0; i < hf.numel(); ++i) EXPECT_EQ(out.data()[i], 1.5 * hf.data()[i]);
}

TEST(Sde, ZeroInitMergeIsIdentity) {
  std::mt19937_64 rng(18);
  Fixture fx(3);
  Tensor f = random_tensor({2, 3, 4, 6}, rng, -1, 1, false);
  FrequencySplit parts = sde_decompose(f);
  Tensor out = fx.sacf.sde_fuse(fx.sacf.sde_enhance(parts.hf), parts.lf, f);
  for (std::size_t i = 0; i < f.numel(); ++i) EXPECT_EQ(out.data()[i], f.data()[i]);
}

TEST(Sde, FuseMatchesComposedOracle) {
  std::mt19937_64 rng(19);
  Fixture fx(2);
  testutil::randomize(fx.ps, rng);
  const Shape s{1, 2, 4, 4};
  Tensor f = random_tensor(s, rng, -1, 1, false);
  FrequencySplit parts = sde_decompose(f);
  Tensor hfe = fx.sacf.sde_enhance(parts.hf);
  Tensor lfc = fx.sacf.lf_conv(parts.lf);
  Tensor out = fx.sacf.sde_fuse(hfe, parts.lf, f);
  const auto mw = fx.sacf.merge.weight.data(), mb = fx.sacf.merge.bias.data();
  for (std::size_t o = 0; o < 2; ++o)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 4; ++x) {
        double acc = mb[o] + f.at(0, o, y, x);
        for (std::size_t c = 0; c < 2; ++c) {
          acc += mw[o * 4 + c] * hfe.at(0, c, y, x);
          acc += mw[o * 4 + 2 + c] * lfc.at(0, c, y / 2, x / 2);
        }
        EXPECT_NEAR(out.at(0, o, y, x), acc, 1e-14);
      }
}

TEST(AdaptiveFuse, ZeroGateAveragesInputs) {
  std::mt19937_64 rng(20);
  Fixture fx(3);
  Tensor hi = random_tensor({1, 3, 2, 3}, rng, -1, 1, false);
  Tensor lo = random_tensor({1, 3, 4, 6}, rng, -1, 1, false);
  Tensor out = fx.sacf.adaptive_fuse(hi, lo);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 6; ++x)
        EXPECT_EQ(out.at(0, c, y, x), 0.5 * hi.at(0, c, y / 2, x / 2) + 0.5 * lo.at(0, c, y, x));
}

TEST(AdaptiveFuse, MatchesGateOracle) {
  std::mt19937_64 rng(21);
  Fixture fx(3);
  testutil::randomize(fx.ps, rng, -2, 2);
  Tensor hi = random_tensor({2, 3, 2, 2}, rng, -1, 1, false);
  Tensor lo = random_tensor({2, 3, 4, 4}, rng, -1, 1, false);
  Tensor out = fx.sacf.adaptive_fuse(hi, lo);
  const auto gw = fx.sacf.gate.weight.data(), gb = fx.sacf.gate.bias.data();
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 4; ++x) {
        double mh = 0, ml = 0;
        for (std::size_t c = 0; c < 3; ++c) {
          mh += hi.at(n, c, y / 2, x / 2) / 3;
          ml += lo.at(n, c, y, x) / 3;
        }
        const double wh = sig(gw[0] * mh + gw[1] * ml + gb[0]);
        const double wl = sig(gw[2] * mh + gw[3] * ml + gb[1]);
        EXPECT_GT(wh, 0.0);
        EXPECT_LT(wl, 1.0);
        for (std::size_t c = 0; c < 3; ++c)
          EXPECT_NEAR(out.at(n, c, y, x), hi.at(n, c, y / 2, x / 2) * wh + lo.at(n, c, y, x) * wl, 1e-14);
      }
}

TEST(AdaptiveFuse, ZeroLowLevelKeepsGatedHighLevel) {
  std::mt19937_64 rng(22);
  Fixture fx(2);
  testutil::randomize(fx.ps, rng, -2, 2);
  Tensor hi = random_tensor({1, 2, 2, 2}, rng, -1, 1, false);
  Tensor lo = Tensor::zeros({1, 2, 4, 4});
  Tensor up = upsample2x(hi);
  Sacf::Gates g = fx.sacf.fusion_gates(up, lo);
  Tensor out = fx.sacf.adaptive_fuse(hi, lo);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 4; ++x) EXPECT_EQ(out.at(0, c, y, x), up.at(0, c, y, x) * g.high.at(0, 0, y, x));
}

TEST(Sacf, GateMapsStayInOpenUnitInterval) {
  std::mt19937_64 rng(23);
  Fixture fx(3);
  testutil::randomize(fx.ps, rng, -3, 3);
  Sacf::Gates g = fx.sacf.fusion_gates(random_tensor({1, 3, 4, 4}, rng, -5, 5, false),
                                      random_tensor({1, 3, 4, 4}, rng, -5, 5, false));
  for (const Tensor* t : {&g.high, &g.low})
    for (double v : t->data()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
}

TEST(Sacf, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(24);
  for (std::size_t k : {3u, 5u}) {
    Fixture fx(2, k);
    testutil::randomize(fx.ps, rng);
    std::vector<Tensor> inputs{random_tensor({2, 2, 2, 3}, rng), random_tensor({2, 2, 4, 6}, rng)};
    for (const Tensor& t : testutil::param_tensors(fx.ps)) inputs.push_back(t);
    auto r = grad_check([&](std::span<const Tensor> in) { return fx.sacf.forward(in[0], in[1]); },
                        inputs);
    EXPECT_TRUE(r.passed) << "k=" << k << " " << r.summary();
  }
}

TEST(Sfa, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(25);
  for (std::size_t k : {3u, 5u, 7u, 9u}) {
    auto r = grad_check([k](std::span<const Tensor> in) { return sfa_aggregate(in[0], k); },
                        {random_tensor({2, 3, 3, 4}, rng)});
    EXPECT_TRUE(r.passed) << "k=" << k << " " << r.summary();
  }
}
