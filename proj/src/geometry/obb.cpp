#include "ossdet/geometry/obb.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace ossdet::geom {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDegenerateArea = 1e-12;

std::atomic<bool> degenerate_reported{false};

Polygon as_polygon(const OrientedBox& box) {
  auto c = corners(box);
  return Polygon(c.begin(), c.end());
}

// > 0 when p is left of the directed edge a->b.
double side(Point a, Point b, Point p) {
  return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

Point intersect(Point p, Point q, double sp, double sq) {
  double t = sp / (sp - sq);
  return {p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
}

}  // namespace

double round_centi(double v) {
  char buf[64];
  int len = std::snprintf(buf, sizeof buf, "%.2f", v);
  double out = 0;
  std::from_chars(buf, buf + len, out);
  return out;
}

double wrap_half_pi(double theta) {
  double t = std::fmod(theta + kPi / 2, kPi);
  if (t < 0) t += kPi;
  t -= kPi / 2;
  // fmod can return exactly pi for inputs a hair below a multiple of pi.
  if (t >= kPi / 2) t -= kPi;
  return t;
}

OrientedBox canonicalize(OrientedBox box) {
  if (box.h > box.w) {
    std::swap(box.w, box.h);
    box.theta += kPi / 2;
  }
  box.theta = wrap_half_pi(box.theta);
  return box;
}

std::array<Point, 4> corners(const OrientedBox& box) {
  double c = std::cos(box.theta);
  double s = std::sin(box.theta);
  double ax = 0.5 * box.w * c, ay = 0.5 * box.w * s;
  double bx = -0.5 * box.h * s, by = 0.5 * box.h * c;
  return {Point{box.cx - ax - bx, box.cy - ay - by}, Point{box.cx + ax - bx, box.cy + ay - by},
          Point{box.cx + ax + bx, box.cy + ay + by}, Point{box.cx - ax + bx, box.cy - ay + by}};
}

OrientedBox from_corners(const std::array<Point, 4>& p) {
  OrientedBox box;
  box.cx = (p[0].x + p[1].x + p[2].x + p[3].x) / 4;
  box.cy = (p[0].y + p[1].y + p[2].y + p[3].y) / 4;
  // Mean of opposite edges, both directed along the first edge.
  double ux = ((p[1].x - p[0].x) + (p[2].x - p[3].x)) / 2;
  double uy = ((p[1].y - p[0].y) + (p[2].y - p[3].y)) / 2;
  double vx = ((p[3].x - p[0].x) + (p[2].x - p[1].x)) / 2;
  double vy = ((p[3].y - p[0].y) + (p[2].y - p[1].y)) / 2;
  box.w = std::hypot(ux, uy);
  box.h = std::hypot(vx, vy);
  box.theta = std::atan2(uy, ux);
  return canonicalize(box);
}

OrientedBox snap_to_centi(const OrientedBox& box) {
  OrientedBox cur = canonicalize(box);
  // Rounded corners are only nearly rectangular, so refit until the corner
  // rounding reproduces itself; this takes at most a few passes in practice.
  for (int pass = 0; pass < 16; ++pass) {
    auto c = corners(cur);
    for (Point& p : c) {
      p.x = round_centi(p.x);
      p.y = round_centi(p.y);
    }
    OrientedBox next = from_corners(c);
    next.class_id = box.class_id;
    next.score = box.score;
    if (next == cur) break;
    cur = next;
  }
  return cur;
}

double signed_area(const Polygon& poly) {
  double acc = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % n];
    acc += a.x * b.y - b.x * a.y;
  }
  return acc / 2;
}

double area(const Polygon& poly) { return std::abs(signed_area(poly)); }

Polygon clip_convex(const Polygon& subject, const Polygon& clip) {
  Polygon out = subject;
  for (std::size_t e = 0, m = clip.size(); e < m && !out.empty(); ++e) {
    Point a = clip[e];
    Point b = clip[(e + 1) % m];
    Polygon in;
    in.swap(out);
    for (std::size_t i = 0, n = in.size(); i < n; ++i) {
      Point p = in[i];
      Point q = in[(i + 1) % n];
      double sp = side(a, b, p);
      double sq = side(a, b, q);
      if (sp >= 0) out.push_back(p);
      if ((sp >= 0) != (sq >= 0)) out.push_back(intersect(p, q, sp, sq));
    }
  }
  return out;
}

double rotated_iou(const OrientedBox& a, const OrientedBox& b, bool* degenerate) {
  double area_a = a.w * a.h;
  double area_b = b.w * b.h;
  if (!(area_a > kDegenerateArea) || !(area_b > kDegenerateArea)) {
    if (degenerate) *degenerate = true;
    if (!degenerate_reported.exchange(true)) {
      std::fprintf(stderr, "warning: rotated IoU of a degenerate box (area %.3g, %.3g) set to 0\n",
                   area_a, area_b);
    }
    return 0.0;
  }
  if (degenerate) *degenerate = false;
  double inter = area(clip_convex(as_polygon(a), as_polygon(b)));
  double uni = area_a + area_b - inter;
  double iou = uni > 0 ? inter / uni : 0.0;
  return std::clamp(iou, 0.0, 1.0);
}

bool contains(const OrientedBox& box, Point p) {
  double c = std::cos(box.theta);
  double s = std::sin(box.theta);
  double dx = p.x - box.cx, dy = p.y - box.cy;
  double u = dx * c + dy * s;
  double v = -dx * s + dy * c;
  return std::abs(u) <= box.w / 2 && std::abs(v) <= box.h / 2;
}

}  // namespace ossdet::geom
