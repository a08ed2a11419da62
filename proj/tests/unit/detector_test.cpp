#include <gtest/gtest.h>

#include <random>

#include "ossdet/model/detector.hpp"
#include "ossdet/tensor/grad_check.hpp"
#include "test_util.hpp"

using namespace ossdet;
using namespace ossdet::tensor;
using namespace ossdet::model;
using geom::OrientedBox;
using testutil::random_tensor;

namespace {

DetectorConfig tiny() {
  DetectorConfig c;
  c.in_bands = 3;
  c.num_classes = 2;
  c.image_height = 64;
  c.image_width = 32;
  c.channels = 3;
  c.widths = {3, 3, 4, 4, 4};
  return c;
}

}  // namespace

TEST(Backbone, PyramidShapes) {
  ParamStore ps(1);
  Backbone bb(ps, {.in_bands = 8, .channels = 5});
  Pyramid p = bb.forward(Tensor::zeros({2, 8, 64, 96}));
  for (std::size_t l = 0; l < 5; ++l) {
    const std::size_t stride = std::size_t{2} << l;
    EXPECT_EQ(p.levels[l].shape(), (Shape{2, 5, 64 / stride, 96 / stride}));
  }
}

TEST(Backbone, ZeroInputGivesLateralBiases) {
  std::mt19937_64 rng(2);
  ParamStore ps(2);
  Backbone bb(ps, {.in_bands = 2, .channels = 3, .widths = {2, 2, 2, 2, 2}});
  for (auto& p : ps.params())
    if (p.name.ends_with("/bias")) {
      for (double& v : p.tensor.data_mut()) v = 0.0;
    }
  Pyramid out = bb.forward(Tensor::zeros({1, 2, 32, 32}));
  for (const Tensor& t : out.levels)
    for (double v : t.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backbone, RejectsBandMismatchAndBadSizes) {
  ParamStore ps(3);
  Backbone bb(ps, {.in_bands = 8, .channels = 4});
  EXPECT_THROW(bb.forward(Tensor::zeros({1, 3, 32, 32})), ShapeError);
  EXPECT_THROW(bb.forward(Tensor::zeros({1, 8, 48, 32})), ShapeError);
}

TEST(Backbone, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(4);
  ParamStore ps(4);
  Backbone bb(ps, {.in_bands = 2, .channels = 2, .widths = {2, 3, 3, 3, 3}});
  testutil::randomize(ps, rng);
  std::vector<Tensor> inputs{random_tensor({1, 2, 32, 32}, rng)};
  for (const Tensor& t : testutil::param_tensors(ps)) inputs.push_back(t);
  auto r = grad_check(
      [&](std::span<const Tensor> in) {
        Pyramid p = bb.forward(in[0]);
        Tensor acc = sum(p.levels[0]);
        for (std::size_t l = 1; l < 5; ++l) acc = add(acc, scale(sum(tanh(p.levels[l])), double(l)));
        return acc;
      },
      inputs, {.max_coords_per_input = 6});
  EXPECT_TRUE(r.passed) << r.summary();
}

TEST(Detector, DefaultStaysUnderParameterBudget) {
  Detector det(DetectorConfig{}, 1);
  EXPECT_LT(det.params().scalar_count(), 500000u);
}

TEST(Detector, BandCountOnlyChangesTheStem) {
  DetectorConfig a = tiny(), b = tiny();
  b.in_bands = 8;
  Detector da(a, 1), db(b, 1);
  const auto& pa = da.params().params();
  const auto& pb = db.params().params();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    if (pa[i].name == "backbone/stem/weight") {
      EXPECT_EQ(pb[i].tensor.shape().c, 8u);
    } else {
      EXPECT_EQ(pa[i].tensor.shape(), pb[i].tensor.shape()) << pa[i].name;
    }
  }
}

TEST(Detector, ForwardShapesAndDeterminism) {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({2, 3, 64, 32}, rng, 0, 1, false);
  Detector d1(tiny(), 9), d2(tiny(), 9);
  ForwardResult r1 = d1.forward(x), r2 = d2.forward(x);
  EXPECT_EQ(r1.mask.shape(), (Shape{2, 1, 16, 8}));
  ASSERT_EQ(r1.head.size(), 4u);
  for (std::size_t l = 0; l < 4; ++l) {
    EXPECT_EQ(r1.head[l].cls.shape(), (Shape{2, 2, 16u >> l, 8u >> l}));
    EXPECT_EQ(r1.head[l].stride, std::size_t{4} << l);
    for (std::size_t i = 0; i < r1.head[l].cls.numel(); ++i)
      EXPECT_EQ(r1.head[l].cls.data()[i], r2.head[l].cls.data()[i]);
  }
  EXPECT_THROW(d1.forward(Tensor::zeros({1, 3, 32, 32})), ShapeError);
}

TEST(Detector, ZeroAlphaLossIsDetectionLoss) {
  std::mt19937_64 rng(6);
  Detector det(tiny(), 3);
  Tensor x = random_tensor({1, 3, 64, 32}, rng, 0, 1, false);
  ForwardResult out = det.forward(x);
  LossBreakdown lb = det.loss(out, {{OrientedBox::make(16, 20, 12, 6, 0.3, 1)}}, 0.0, 0.1);
  EXPECT_EQ(lb.total.item(), lb.det.item());
  LossBreakdown lb2 = det.loss(out, {{OrientedBox::make(16, 20, 12, 6, 0.3, 1)}}, 0.6, 0.1);
  EXPECT_DOUBLE_EQ(lb2.act.item(), lb2.l_i.item() + 0.1 * lb2.l_d.item());
  EXPECT_DOUBLE_EQ(lb2.total.item(), lb2.det.item() + 0.6 * lb2.act.item());
  EXPECT_GE(lb2.positives, 1.0);
}

TEST(Detector, EndToEndGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  Detector det(tiny(), 4);
  testutil::randomize(det.params(), rng, -0.4, 0.4);
  Tensor x = random_tensor({1, 3, 64, 32}, rng, 0, 1, false);
  const std::vector<std::vector<OrientedBox>> boxes = {
      {OrientedBox::make(16, 20, 12, 6, 0.3, 1), OrientedBox::make(10, 44, 22, 10, -0.5, 0)}};
  auto r = grad_check(
      [&](std::span<const Tensor>) { return det.loss(det.forward(x), boxes, 0.6, 0.1).total; },
      testutil::param_tensors(det.params()), {.max_coords_per_input = 2});
  EXPECT_TRUE(r.passed) << r.summary();
}
