#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ossdet/data/mask.hpp"
#include "ossdet/model/object_mask.hpp"
#include "ossdet/tensor/grad_check.hpp"
#include "test_util.hpp"

using namespace ossdet;
using namespace ossdet::tensor;
using namespace ossdet::model;
using testutil::random_tensor;

namespace {

// Two images; the second has no foreground.
std::vector<double> soft_gt(std::mt19937_64& rng, std::size_t per, double fg_fraction) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> g(per, 0.0);
  for (double& v : g)
    if (u(rng) < fg_fraction) v = 0.05 + 0.95 * u(rng);
  return g;
}

struct Losses {
  double li, ld, lact;
};

Losses eval(const std::vector<double>& mp, const std::vector<double>& mg, Shape s, double gamma) {
  ActivationLoss l = activation_loss(Tensor::from(s, mp), mg, gamma);
  return {l.l_i.item(), l.l_d.item(), l.l_act.item()};
}

}  // namespace

TEST(PredictMask, ZeroInputZeroBiasGivesHalf) {
  ParamStore ps(1);
  ObjectMask m(ps, 4);
  Tensor out = m.predict(Tensor::zeros({2, 4, 4, 4}));
  ASSERT_EQ(out.shape(), (Shape{2, 1, 4, 4}));
  for (double v : out.data()) EXPECT_EQ(v, 0.5);
}

TEST(PredictMask, LargeBiasSaturates) {
  std::mt19937_64 rng(2);
  ParamStore ps(2);
  ObjectMask m(ps, 3);
  m.conv2.bias.data_mut()[0] = 50.0;
  for (double v : testutil::values(m.predict(random_tensor({1, 3, 4, 4}, rng, -0.1, 0.1, false)))) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(PredictMask, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  ParamStore ps(3);
  ObjectMask m(ps, 3);
  testutil::randomize(ps, rng);
  std::vector<Tensor> inputs{random_tensor({2, 3, 4, 4}, rng)};
  for (const Tensor& t : testutil::param_tensors(ps)) inputs.push_back(t);
  auto r = grad_check([&](std::span<const Tensor> in) { return m.predict(in[0]); }, inputs);
  EXPECT_TRUE(r.passed) << r.summary();
}

TEST(ActivationLoss, PerfectBinaryMaskIsZero) {
  std::mt19937_64 rng(4);
  const Shape s{1, 1, 8, 8};
  auto mg = soft_gt(rng, 64, 0.3);
  std::vector<double> mp(64);
  for (std::size_t i = 0; i < 64; ++i) mp[i] = mg[i] > 0 ? 1.0 : 0.0;
  // A perfect hit recovers all of M_g only when the target is binary.
  std::vector<double> mg_bin = mp;
  Losses l = eval(mp, mg_bin, s, 0.1);
  EXPECT_EQ(l.li, 0.0);
  EXPECT_EQ(l.ld, 0.0);
  EXPECT_EQ(l.lact, 0.0);
}

TEST(ActivationLoss, AllOnesMaskFixture) {
  std::mt19937_64 rng(5);
  const Shape s{1, 1, 6, 7};
  auto mg = soft_gt(rng, 42, 0.4);
  std::size_t background = 0;
  for (double v : mg) background += v > 0 ? 0 : 1;
  Losses l = eval(std::vector<double>(42, 1.0), mg, s, 0.1);
  EXPECT_EQ(l.li, 0.0);
  EXPECT_EQ(l.ld, double(background) / 42.0);
}

TEST(ActivationLoss, AllZerosMaskFixture) {
  std::mt19937_64 rng(6);
  const Shape s{1, 1, 5, 5};
  Losses l = eval(std::vector<double>(25, 0.0), soft_gt(rng, 25, 0.5), s, 0.1);
  EXPECT_EQ(l.li, 1.0);
  EXPECT_EQ(l.ld, 0.0);
  EXPECT_EQ(l.lact, 1.0);
}

TEST(ActivationLoss, EmptyGroundTruthSkipsInclusionTerm) {
  const Shape s{2, 1, 2, 2};
  std::vector<double> mg = {1, 0, 0, 0, 0, 0, 0, 0};
  std::vector<double> mp = {1, 0.5, 0.5, 0.5, 0.2, 0.2, 0.2, 0.2};
  Losses l = eval(mp, mg, s, 0.5);
  EXPECT_DOUBLE_EQ(l.li, 0.0);  // image 0 fully hit, image 1 skipped
  EXPECT_DOUBLE_EQ(l.ld, (1.5 / 2.5 + 1.0) / 2);
  EXPECT_DOUBLE_EQ(l.lact, l.li + 0.5 * l.ld);
}

TEST(ActivationLoss, BoundedOnRandomInputs) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Shape s{2, 1, 4, 5};
    Tensor mp = random_tensor(s, rng, 1e-6, 1 - 1e-6, false);
    auto mg = soft_gt(rng, 40, 0.4);
    ActivationLoss l = activation_loss(mp, mg, 0.1);
    EXPECT_GE(l.l_i.item(), 0.0);
    EXPECT_LE(l.l_i.item(), 1.0);
    EXPECT_GE(l.l_d.item(), 0.0);
    EXPECT_LE(l.l_d.item(), 1.0);
  }
}

TEST(ActivationLoss, GradientSigns) {
  std::mt19937_64 rng(8);
  const Shape s{1, 1, 6, 6};
  auto mg = soft_gt(rng, 36, 0.3);
  Tensor mp = random_tensor(s, rng, 0.1, 0.9);
  backward(activation_loss(mp, mg, 0.1).l_act);
  for (std::size_t i = 0; i < 36; ++i) {
    if (mg[i] > 0) continue;
    EXPECT_GT(mp.grad()[i], 0.0) << "background pixel " << i;
  }
  Tensor mp2 = mp.detach(true);
  backward(activation_loss(mp2, mg, 0.1).l_i);
  for (std::size_t i = 0; i < 36; ++i) {
    if (mg[i] > 0) {
      EXPECT_LT(mp2.grad()[i], 0.0) << "foreground pixel " << i;
    }
  }
}

TEST(ActivationLoss, Monotonicity) {
  std::mt19937_64 rng(9);
  const Shape s{1, 1, 5, 5};
  auto mg = soft_gt(rng, 25, 0.4);
  std::vector<double> mp(25);
  std::uniform_real_distribution<double> u(0.05, 0.8);
  for (double& v : mp) v = u(rng);
  Losses base = eval(mp, mg, s, 0.1);
  auto fg = mp, bg = mp;
  for (std::size_t i = 0; i < 25; ++i) (mg[i] > 0 ? fg[i] : bg[i]) += 0.15;
  EXPECT_LE(eval(fg, mg, s, 0.1).li, base.li);
  EXPECT_GE(eval(bg, mg, s, 0.1).ld, base.ld);
}

TEST(ActivationLoss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(10);
  const Shape s{2, 1, 4, 4};
  std::vector<double> mg = soft_gt(rng, 32, 0.35);
  mg[3] = 0.7;  // both images keep some foreground
  mg[20] = 0.4;
  auto r = grad_check(
      [&](std::span<const Tensor> in) {
        ActivationLoss l = activation_loss(sigmoid(in[0]), mg, 0.3);
        return add(add(l.l_act, scale(l.l_i, 0.7)), scale(l.l_d, -1.3));
      },
      {random_tensor(s, rng, -2, 2)});
  EXPECT_TRUE(r.passed) << r.summary();
}

TEST(ActivationLoss, WorksWithRasterizedTargets) {
  const auto boxes = std::vector{geom::OrientedBox::make(16, 16, 12, 6, 0.3)};
  data::ActivationMask g = data::rasterize_gt_mask(boxes, 8, 8, 4);
  Losses l = eval(std::vector<double>(64, 1.0), g.values, {1, 1, 8, 8}, 0.1);
  EXPECT_EQ(l.li, 0.0);
  EXPECT_GT(l.ld, 0.5);
}

TEST(ApplyMask, Fixtures) {
  std::mt19937_64 rng(11);
  Tensor f = random_tensor({2, 3, 2, 2}, rng, -1, 1, false);
  Tensor ones = Tensor::full({2, 1, 2, 2}, 1.0), zeros = Tensor::zeros({2, 1, 2, 2});
  for (std::size_t i = 0; i < f.numel(); ++i) {
    EXPECT_EQ(apply_mask(f, ones).data()[i], f.data()[i]);
    EXPECT_EQ(apply_mask(f, zeros).data()[i], 0.0);
  }
  Tensor m = random_tensor({2, 1, 2, 2}, rng, 0, 1, false);
  Tensor out = apply_mask(f, m);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t x = 0; x < 2; ++x) EXPECT_EQ(out.at(n, c, y, x), f.at(n, c, y, x) * m.at(n, 0, y, x));
  EXPECT_THROW(apply_mask(f, f), ShapeError);
}
