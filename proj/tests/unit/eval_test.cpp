#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "ossdet/eval/map.hpp"

using namespace ossdet;
using namespace ossdet::eval;
using geom::OrientedBox;

namespace {

OrientedBox det(double cx, double cy, double w, double h, double t, int cls, double score) {
  OrientedBox b = OrientedBox::make(cx, cy, w, h, t, cls);
  b.score = score;
  return b;
}

std::vector<ImageBoxes> random_fixture(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_img(1, 3), n_gt(0, 5), n_det(0, 10);
  std::uniform_real_distribution<double> pos(10, 40), len(4, 14), ang(-1.5, 1.5), jit(-3, 3), sc(0, 1);
  std::vector<ImageBoxes> out(std::size_t(n_img(rng)));
  for (auto& im : out) {
    const int g = n_gt(rng);
    for (int i = 0; i < g; ++i) im.gts.push_back(OrientedBox::make(pos(rng), pos(rng), len(rng), len(rng), ang(rng)));
  }
  int total_dets = 0;
  for (auto& im : out) {
    const int d = std::min(n_det(rng), 10 - total_dets);
    total_dets += d;
    for (int i = 0; i < d; ++i) {
      OrientedBox b = !im.gts.empty() && sc(rng) < 0.7
                          ? im.gts[std::size_t(i) % im.gts.size()]
                          : OrientedBox::make(pos(rng), pos(rng), len(rng), len(rng), ang(rng));
      b.cx += jit(rng) / 2;
      b.cy += jit(rng) / 2;
      b.theta += jit(rng) / 20;
      // Coarse scores force ties, which must resolve by position.
      b.score = std::round(sc(rng) * 4) / 4;
      im.dets.push_back(b);
    }
  }
  return out;
}

}  // namespace

TEST(MatchAndAp, PerfectDetectionsScoreOne) {
  std::vector<ImageBoxes> im(1);
  im[0].gts = {OrientedBox::make(10, 10, 8, 4, 0.3), OrientedBox::make(30, 20, 12, 5, -0.7)};
  for (std::size_t i = 0; i < 2; ++i) {
    OrientedBox b = im[0].gts[i];
    b.score = 0.9 - 0.1 * double(i);
    im[0].dets.push_back(b);
  }
  for (double t : coco_thresholds()) EXPECT_EQ(match_and_ap(im, t).ap, 1.0);
}

TEST(MatchAndAp, NoDetectionsScoreZero) {
  std::vector<ImageBoxes> im(1);
  im[0].gts = {OrientedBox::make(10, 10, 8, 4, 0.3)};
  EXPECT_EQ(match_and_ap(im, 0.5).ap, 0.0);
}

TEST(MatchAndAp, DuplicateDetectionFixture) {
  // GT A and B; dets: A (0.9), duplicate of A (0.8), B (0.7).
  std::vector<ImageBoxes> im(1);
  im[0].gts = {OrientedBox::make(10, 10, 8, 4, 0), OrientedBox::make(40, 10, 8, 4, 0)};
  im[0].dets = {det(10, 10, 8, 4, 0, 0, 0.9), det(10.2, 10, 8, 4, 0, 0, 0.8), det(40, 10, 8, 4, 0, 0, 0.7)};
  // Ranks: TP, FP, TP -> precision 1, 1/2, 2/3 at recall 1/2, 1/2, 1.
  // Recall levels 0..0.5 see precision 1 (51 points), 0.51..1 see 2/3 (50 points).
  const double want = (51 * 1.0 + 50 * (2.0 / 3.0)) / 101;
  EXPECT_NEAR(match_and_ap(im, 0.5).ap, want, 1e-15);
  EXPECT_EQ(match_and_ap(im, 0.5).ap, oracles::brute_force_ap(im, 0.5));
}

TEST(MatchAndAp, MatchesBruteForceOracleExactly) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    auto fx = random_fixture(rng);
    for (double t : {0.3, 0.5, 0.75}) {
      EXPECT_EQ(match_and_ap(fx, t).ap, oracles::brute_force_ap(fx, t)) << "trial " << trial << " thr " << t;
    }
  }
}

TEST(MatchAndAp, InvariantToInputOrderWithDistinctScores) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 30; ++trial) {
    auto fx = random_fixture(rng);
    for (auto& im : fx)
      for (auto& d : im.dets) d.score = u(rng);
    const double base = match_and_ap(fx, 0.5).ap;
    for (auto& im : fx) std::shuffle(im.dets.begin(), im.dets.end(), rng);
    EXPECT_EQ(match_and_ap(fx, 0.5).ap, base);
  }
}

TEST(Evaluate, PerfectSingleClass) {
  std::vector<std::vector<OrientedBox>> gts = {{OrientedBox::make(10, 10, 8, 4, 0.1, 0)},
                                               {OrientedBox::make(20, 25, 9, 6, 1.0, 0)}};
  auto dets = gts;
  for (auto& im : dets)
    for (auto& b : im) b.score = 0.9;
  EvalResult r = evaluate(dets, gts, {"car"});
  EXPECT_EQ(r.map50, 1.0);
  EXPECT_EQ(r.map75, 1.0);
  EXPECT_EQ(r.map, 1.0);
}

TEST(Evaluate, PoorlyLocalisedDetectionsScoreZero) {
  std::vector<std::vector<OrientedBox>> gts = {{OrientedBox::make(10, 10, 8, 4, 0, 0)}};
  std::vector<std::vector<OrientedBox>> dets = {{det(14, 10, 8, 4, 0, 0, 0.9), det(10, 10, 8, 4, 1.2, 0, 0.8)}};
  EvalResult r = evaluate(dets, gts, {"car"});
  EXPECT_EQ(r.map50, 0.0);
  EXPECT_EQ(r.map, 0.0);
}

TEST(Evaluate, MixedFixtureMatchesPerClassOracle) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<OrientedBox>> gts(3), dets(3);
    for (int cls = 0; cls < 3; ++cls) {
      auto fx = random_fixture(rng);
      fx.resize(3);
      for (std::size_t i = 0; i < 3; ++i) {
        for (auto b : fx[i].gts) {
          b.class_id = cls;
          gts[i].push_back(b);
        }
        for (auto b : fx[i].dets) {
          b.class_id = cls;
          dets[i].push_back(b);
        }
      }
    }
    EvalResult r = evaluate(dets, gts, {"a", "b", "c"});
    double s50 = 0, sall = 0;
    int counted = 0;
    for (int cls = 0; cls < 3; ++cls) {
      std::vector<ImageBoxes> per(3);
      bool any = false;
      for (std::size_t i = 0; i < 3; ++i) {
        for (const auto& b : gts[i]) if (b.class_id == cls) per[i].gts.push_back(b), any = true;
        for (const auto& b : dets[i]) if (b.class_id == cls) per[i].dets.push_back(b);
      }
      EXPECT_EQ(r.has_gt[std::size_t(cls)], any);
      double row = 0;
      for (std::size_t t = 0; t < 10; ++t) {
        const double ap = oracles::brute_force_ap(per, 0.5 + 0.05 * double(t));
        EXPECT_EQ(r.ap[std::size_t(cls)][t], ap);
        row += ap;
      }
      if (!any) continue;
      ++counted;
      s50 += r.ap[std::size_t(cls)][0];
      sall += row / 10;
    }
    if (counted) {
      EXPECT_DOUBLE_EQ(r.map50, s50 / counted);
      EXPECT_DOUBLE_EQ(r.map, sall / counted);
    }
    EXPECT_GE(r.map50 + 1e-15, r.map);
    for (const auto& row : r.ap)
      for (double v : row) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
  }
}

TEST(Evaluate, RejectsUnknownClasses) {
  std::vector<std::vector<OrientedBox>> gts = {{OrientedBox::make(10, 10, 8, 4, 0, 0)}};
  std::vector<std::vector<OrientedBox>> dets = {{det(10, 10, 8, 4, 0, 3, 0.9)}};
  EXPECT_THROW(evaluate(dets, gts, {"car", "van"}), std::invalid_argument);
  EXPECT_THROW(evaluate(dets, {}, {"car"}), std::invalid_argument);
}

TEST(Evaluate, ReportFilesAreWritten) {
  std::vector<std::vector<OrientedBox>> gts = {{OrientedBox::make(10, 10, 8, 4, 0.1, 1)}};
  std::vector<std::vector<OrientedBox>> dets = {{det(10, 10, 8, 4, 0.1, 1, 0.7)}};
  EvalResult r = evaluate(dets, gts, {"car", "van"});
  const auto dir = std::filesystem::temp_directory_path() / "ossdet_eval_report";
  std::filesystem::remove_all(dir);
  write_report(r, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "metrics.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "pr_van.svg"));
  EXPECT_FALSE(std::filesystem::exists(dir / "pr_car.svg"));
  std::ifstream in(dir / "metrics.json");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(text, format_report(r));
  EXPECT_NE(text.find("\"mAP50\": 1.0"), std::string::npos) << text;
}
