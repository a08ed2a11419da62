#pragma once

// Slow, independently written references shared by the unit and acceptance
// tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "ossdet/eval/map.hpp"
#include "ossdet/geometry/obb.hpp"

namespace ossdet::oracles {

// Reference AP computed the slow way: selection-sorted detections, naive
// matching, and for each recall level the max precision over qualifying ranks.
inline double brute_force_ap(const std::vector<eval::ImageBoxes>& images, double thr) {
  struct D {
    std::size_t img, idx, flat;
    double score;
  };
  std::vector<D> all;
  std::size_t n_gt = 0, flat = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    n_gt += images[i].gts.size();
    for (std::size_t j = 0; j < images[i].dets.size(); ++j) all.push_back({i, j, flat++, *images[i].dets[j].score});
  }
  if (n_gt == 0) return 0.0;
  std::vector<D> sorted;
  while (!all.empty()) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < all.size(); ++k)
      if (all[k].score > all[best].score || (all[k].score == all[best].score && all[k].flat < all[best].flat))
        best = k;
    sorted.push_back(all[best]);
    all.erase(all.begin() + long(best));
  }
  std::vector<std::vector<bool>> taken(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) taken[i].assign(images[i].gts.size(), false);
  std::vector<double> prec, rec;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const auto& d = sorted[k];
    double best = -1;
    long which = -1;
    for (std::size_t g = 0; g < images[d.img].gts.size(); ++g) {
      if (taken[d.img][g]) continue;
      const double iou = geom::rotated_iou(images[d.img].dets[d.idx], images[d.img].gts[g]);
      if (iou > best) {
        best = iou;
        which = long(g);
      }
    }
    if (which >= 0 && best >= thr) {
      taken[d.img][std::size_t(which)] = true;
      ++tp;
    }
    prec.push_back(double(tp) / double(k + 1));
    rec.push_back(double(tp) / double(n_gt));
  }
  double sum = 0;
  for (int i = 0; i <= 100; ++i) {
    const double level = i / 100.0;
    double p = 0;
    for (std::size_t k = 0; k < prec.size(); ++k)
      if (rec[k] >= level) p = std::max(p, prec[k]);
    sum += p;
  }
  return sum / 101;
}

// Box `a` as a polygon clipped by the four half-planes |(p - c_b) . u| <= w/2
// and |(p - c_b) . v| <= h/2 of box `b`, all in the boxes' own frames.
inline double halfplane_iou(const geom::OrientedBox& a, const geom::OrientedBox& b) {
  struct P {
    double x, y;
  };
  const double ca = std::cos(a.theta), sa = std::sin(a.theta);
  std::vector<P> poly;
  for (auto [sx, sy] : std::array<std::array<double, 2>, 4>{{{1, 1}, {-1, 1}, {-1, -1}, {1, -1}}}) {
    const double u = sx * a.w / 2, v = sy * a.h / 2;
    poly.push_back({a.cx + u * ca - v * sa, a.cy + u * sa + v * ca});
  }
  const double cb = std::cos(b.theta), sb = std::sin(b.theta);
  // Half-plane n . (p - c) <= d, for n = +-u, +-v.
  const std::array<std::array<double, 3>, 4> planes{{{cb, sb, b.w / 2}, {-cb, -sb, b.w / 2},
                                                     {-sb, cb, b.h / 2}, {sb, -cb, b.h / 2}}};
  for (const auto& pl : planes) {
    auto f = [&](P p) { return pl[0] * (p.x - b.cx) + pl[1] * (p.y - b.cy) - pl[2]; };
    std::vector<P> next;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const P p = poly[i], q = poly[(i + 1) % poly.size()];
      const double fp = f(p), fq = f(q);
      if (fp <= 0) next.push_back(p);
      if ((fp < 0 && fq > 0) || (fp > 0 && fq < 0)) {
        const double t = fp / (fp - fq);
        next.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
      }
    }
    poly = std::move(next);
    if (poly.size() < 3) return 0.0;
  }
  double twice = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const P p = poly[i], q = poly[(i + 1) % poly.size()];
    twice += p.x * q.y - q.x * p.y;
  }
  const double inter = std::abs(twice) / 2;
  return inter / (a.w * a.h + b.w * b.h - inter);
}

}  // namespace ossdet::oracles
