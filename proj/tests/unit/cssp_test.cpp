#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ossdet/model/cssp.hpp"
#include "ossdet/tensor/grad_check.hpp"
#include "test_util.hpp"

using namespace ossdet;
using namespace ossdet::tensor;
using namespace ossdet::model;
using testutil::idx;
using testutil::random_tensor;

namespace {

using Mat = std::vector<std::vector<double>>;  // row-major [rows][cols]

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// (C, HW) view of batch item n.
Mat as_matrix(std::span<const double> v, const Shape& s, std::size_t n) {
  Mat m(s.c, std::vector<double>(s.plane()));
  for (std::size_t c = 0; c < s.c; ++c)
    for (std::size_t p = 0; p < s.plane(); ++p) m[c][p] = v[(n * s.c + c) * s.plane() + p];
  return m;
}

Mat matmul_naive(const Mat& a, const Mat& b) {
  Mat out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

Mat transpose(const Mat& a) {
  Mat t(a[0].size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
  return t;
}

Mat tanh_normalized(const Mat& x, double eps) {
  double fro = 0;
  for (const auto& r : x)
    for (double v : r) fro += v * v;
  fro = std::sqrt(fro);
  Mat out = x;
  for (auto& r : out)
    for (double& v : r) v = std::tanh(v / (fro + eps));
  return out;
}

Mat plus(const Mat& a, const Mat& b) {
  Mat out = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) out[i][j] += b[i][j];
  return out;
}

struct NaiveCross {
  Mat a_hat, e_hat, m_ea, m_ae;
};

NaiveCross cross_naive(const Mat& fe, const Mat& fa, double eps) {
  NaiveCross r;
  r.m_ea = tanh_normalized(matmul_naive(transpose(fe), fa), eps);
  r.a_hat = plus(matmul_naive(fe, r.m_ea), fa);
  r.m_ae = tanh_normalized(matmul_naive(transpose(r.a_hat), fe), eps);
  r.e_hat = plus(matmul_naive(r.a_hat, r.m_ae), fe);
  return r;
}

void expect_matches(const Mat& want, std::span<const double> got, const Shape& s, std::size_t n,
                    double tol) {
  const Mat g = as_matrix(got, s, n);
  for (std::size_t i = 0; i < want.size(); ++i)
    for (std::size_t j = 0; j < want[0].size(); ++j) EXPECT_NEAR(g[i][j], want[i][j], tol);
}

}  // namespace

TEST(SpectralAttention, ZeroInputGivesZero) {
  Tensor f = Tensor::zeros({1, 3, 2, 2});
  Tensor out = spectral_attention(f, Tensor::full({1, 3, 1, 1}, 0.7), Tensor::zeros({1, 3, 1, 1}));
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(SpectralAttention, ZeroGateHalvesInput) {
  std::mt19937_64 rng(1);
  Tensor f = random_tensor({2, 3, 2, 3}, rng, -1, 1, false);
  Tensor out = spectral_attention(f, Tensor::zeros({1, 3, 1, 1}), Tensor::zeros({1, 3, 1, 1}));
  for (std::size_t i = 0; i < f.numel(); ++i) EXPECT_EQ(out.data()[i], 0.5 * f.data()[i]);
}

TEST(SpectralAttention, MatchesScalarLoop) {
  std::mt19937_64 rng(2);
  const Shape s{2, 4, 3, 5};
  Tensor f = random_tensor(s, rng, -1, 1, false);
  Tensor w = random_tensor({1, 4, 1, 1}, rng, -2, 2, false);
  Tensor b = random_tensor({1, 4, 1, 1}, rng, -1, 1, false);
  Tensor out = spectral_attention(f, w, b);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      double mean = 0;
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) mean += f.at(n, c, y, x);
      mean /= double(s.plane());
      const double gate = sig(w.data()[c] * mean + b.data()[c]);
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) EXPECT_NEAR(out.at(n, c, y, x), gate * f.at(n, c, y, x), 1e-14);
    }
}

TEST(SpatialAttention, ZeroGateHalvesInput) {
  std::mt19937_64 rng(3);
  Tensor f = random_tensor({1, 3, 2, 2}, rng, -1, 1, false);
  Tensor out = spatial_attention(f, Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 2, 2}));
  for (std::size_t i = 0; i < f.numel(); ++i) EXPECT_EQ(out.data()[i], 0.5 * f.data()[i]);
}

TEST(SpatialAttention, SaturatedBiasPassesInput) {
  Tensor f = Tensor::full({1, 3, 2, 2}, 0.8);
  Tensor out = spatial_attention(f, Tensor::zeros({1, 1, 2, 2}), Tensor::full({1, 1, 2, 2}, 40.0));
  for (double v : out.data()) EXPECT_NEAR(v, 0.8, 1e-15);
}

TEST(SpatialAttention, MatchesScalarLoop) {
  std::mt19937_64 rng(4);
  const Shape s{2, 3, 4, 2};
  Tensor f = random_tensor(s, rng, -1, 1, false);
  Tensor w = random_tensor({1, 1, 4, 2}, rng, -2, 2, false);
  Tensor b = random_tensor({1, 1, 4, 2}, rng, -1, 1, false);
  Tensor out = spatial_attention(f, w, b);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t y = 0; y < s.h; ++y)
      for (std::size_t x = 0; x < s.w; ++x) {
        double mean = 0;
        for (std::size_t c = 0; c < s.c; ++c) mean += f.at(n, c, y, x);
        mean /= double(s.c);
        const double gate = sig(w.at(0, 0, y, x) * mean + b.at(0, 0, y, x));
        for (std::size_t c = 0; c < s.c; ++c) EXPECT_NEAR(out.at(n, c, y, x), gate * f.at(n, c, y, x), 1e-14);
      }
}

TEST(CrossModulate, ZeroInputsGiveZero) {
  Tensor z = Tensor::zeros({1, 2, 2, 2});
  CrossModulated m = cross_modulate(z, z, 1e-8);
  for (double v : m.a_hat.data()) EXPECT_EQ(v, 0.0);
  for (double v : m.e_hat.data()) EXPECT_EQ(v, 0.0);
}

TEST(CrossModulate, SinglePositionReducesToSignGate) {
  const std::vector<double> fe = {0.3, -0.2, 0.5}, fa = {0.1, 0.4, -0.7};
  Tensor te = Tensor::from({1, 3, 1, 1}, fe), ta = Tensor::from({1, 3, 1, 1}, fa);
  CrossModulated m = cross_modulate(te, ta, 1e-8);
  double s = 0;
  for (int c = 0; c < 3; ++c) s += fe[c] * fa[c];
  const double m1 = std::tanh(s / (std::abs(s) + 1e-8));
  EXPECT_NEAR(m1, std::tanh(s > 0 ? 1.0 : -1.0), 1e-7);
  std::vector<double> a(3);
  double t = 0;
  for (int c = 0; c < 3; ++c) {
    a[c] = fe[c] * m1 + fa[c];
    t += a[c] * fe[c];
  }
  const double m2 = std::tanh(t / (std::abs(t) + 1e-8));
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(m.a_hat.data()[c], a[c], 1e-15);
    EXPECT_NEAR(m.e_hat.data()[c], a[c] * m2 + fe[c], 1e-15);
  }
}

TEST(CrossModulate, MatchesNaiveMatrixChain) {
  std::mt19937_64 rng(5);
  const Shape s{2, 2, 2, 2};
  Tensor fe = random_tensor(s, rng, -1, 1, false), fa = random_tensor(s, rng, -1, 1, false);
  CrossModulated m = cross_modulate(fe, fa, 1e-8);
  for (std::size_t n = 0; n < s.n; ++n) {
    NaiveCross want = cross_naive(as_matrix(fe.data(), s, n), as_matrix(fa.data(), s, n), 1e-8);
    expect_matches(want.a_hat, m.a_hat.data(), s, n, 1e-13);
    expect_matches(want.e_hat, m.e_hat.data(), s, n, 1e-13);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_NEAR(m.m_ea.at(n, 0, i, j), want.m_ea[i][j], 1e-14);
        EXPECT_NEAR(m.m_ae.at(n, 0, i, j), want.m_ae[i][j], 1e-14);
      }
  }
}

TEST(CrossModulate, CorrelationEntriesStrictlyInsideUnitInterval) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Shape s{1, 4, 3, 3};
    CrossModulated m = cross_modulate(random_tensor(s, rng, -50, 50, false),
                                      random_tensor(s, rng, -50, 50, false), 1e-8);
    for (double v : m.m_ea.data()) EXPECT_LT(std::abs(v), 1.0);
    for (double v : m.m_ae.data()) EXPECT_LT(std::abs(v), 1.0);
  }
}

TEST(Cssp, ZeroInputYieldsFuseBias) {
  std::mt19937_64 rng(7);
  ParamStore ps(1);
  Cssp cssp(ps, {.channels = 3, .height = 2, .width = 2});
  testutil::randomize(ps, rng);
  Tensor out = cssp.forward(Tensor::zeros({2, 3, 2, 2}));
  ASSERT_EQ(out.shape(), (Shape{2, 3, 2, 2}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < 4; ++p) EXPECT_EQ(out.data()[(n * 3 + c) * 4 + p], cssp.fuse.bias.data()[c]);
}

TEST(Cssp, SumFusionAddsBothBranches) {
  std::mt19937_64 rng(8);
  ParamStore ps(2);
  Cssp cssp(ps, {.channels = 2, .height = 2, .width = 3, .fusion = CsspFusion::sum});
  EXPECT_FALSE(ps.contains("cssp/fuse/weight"));
  Tensor f = random_tensor({1, 2, 2, 3}, rng, -1, 1, false);
  Tensor out = cssp.forward(f);
  CrossModulated m = cross_modulate(spectral_attention(f, cssp.w_e, cssp.b_e),
                                    spatial_attention(f, cssp.w_a, cssp.b_a), 1e-8);
  for (std::size_t i = 0; i < out.numel(); ++i)
    EXPECT_EQ(out.data()[i], m.a_hat.data()[i] + m.e_hat.data()[i]);
}

TEST(Cssp, RejectsShapeMismatchAndOversizedMaps) {
  ParamStore ps(3);
  Cssp cssp(ps, {.channels = 2, .height = 2, .width = 2});
  EXPECT_THROW(cssp.forward(Tensor::zeros({1, 2, 4, 4})), ShapeError);
  ParamStore big(4);
  EXPECT_THROW(Cssp(big, {.channels = 2, .height = 65, .width = 64}), std::invalid_argument);
}

TEST(Cssp, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(9);
  for (CsspFusion fusion : {CsspFusion::concat_conv, CsspFusion::sum}) {
    ParamStore ps(5);
    Cssp cssp(ps, {.channels = 3, .height = 2, .width = 3, .fusion = fusion});
    testutil::randomize(ps, rng);
    std::vector<Tensor> inputs{random_tensor({2, 3, 2, 3}, rng)};
    for (const Tensor& t : testutil::param_tensors(ps)) inputs.push_back(t);
    auto r = grad_check([&](std::span<const Tensor> in) { return cssp.forward(in[0]); }, inputs);
    EXPECT_TRUE(r.passed) << r.summary();
  }
}
