#pragma once

// Oriented rectangles and convex polygon clipping.
//
// Orientation: the corner order of every exported polygon has positive
// shoelace area in (x, y) pixel coordinates. Canonical boxes satisfy w >= h and
// theta in [-pi/2, pi/2).

#include <array>
#include <optional>
#include <vector>

namespace ossdet::geom {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

using Polygon = std::vector<Point>;

struct OrientedBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  double theta = 0.0;
  int class_id = 0;
  std::optional<double> score;

  static OrientedBox make(double cx, double cy, double w, double h, double theta,
                          int class_id = 0) {
    OrientedBox b;
    b.cx = cx, b.cy = cy, b.w = w, b.h = h, b.theta = theta, b.class_id = class_id;
    return b;
  }

  friend bool operator==(const OrientedBox&, const OrientedBox&) = default;
};

/// Wraps an angle into [-pi/2, pi/2).
double wrap_half_pi(double theta);

/// Long-edge form: swaps w/h with a quarter turn when h > w, then wraps theta.
OrientedBox canonicalize(OrientedBox box);

/// Corners c -/+ (w/2) u -/+ (h/2) v, u = (cos t, sin t), v = (-sin t, cos t).
std::array<Point, 4> corners(const OrientedBox& box);

/// Inverse of corners() for any rectangle given in traversal order; the result
/// is canonical. Non-rectangular quadrilaterals are fitted by their mean edges.
OrientedBox from_corners(const std::array<Point, 4>& pts);

/// Value printed with two decimals ("%.2f") and parsed back.
double round_centi(double v);

/// Nearest box whose corners, rounded to 1/100 pixel and refitted, give the
/// box back bit-exactly; such boxes survive a two-decimal text round-trip.
OrientedBox snap_to_centi(const OrientedBox& box);

/// Signed shoelace area; positive for the exported orientation.
double signed_area(const Polygon& poly);
double area(const Polygon& poly);

/// Intersection of two convex polygons (both positively oriented) by successive
/// half-plane clipping of `subject` against each edge of `clip`.
Polygon clip_convex(const Polygon& subject, const Polygon& clip);

/// Ratio of intersection area to union area, in [0, 1]. Boxes whose area is
/// below 1e-12 yield 0 and set *degenerate (if given); the first such event of
/// the process is reported on stderr.
double rotated_iou(const OrientedBox& a, const OrientedBox& b, bool* degenerate = nullptr);

/// True when p lies inside or on the boundary of the box.
bool contains(const OrientedBox& box, Point p);

}  // namespace ossdet::geom
