// Oriented grasp-rectangle geometry: 5-D grasp representation, angle-class
// codec, rotated-rectangle Jaccard index and the rectangle-metric predicate.
// All functions are pure; coordinates are image pixels (x = column, y = row),
// angles are degrees.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace semgrasp {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

constexpr double kPi = 3.14159265358979323846;
inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

/// Wraps an angle into [-90, 90); a grasp and its 180-degree rotation are the
/// same physical parallel-plate grasp.
inline double wrap_angle_deg(double theta) {
  double t = theta - 180.0 * std::floor((theta + 90.0) / 180.0);
  // floor rounding can land exactly on +90 for inputs like -90 - 1e-18
  if (t >= 90.0) t -= 180.0;
  return t;
}

/// 5-D grasp configuration g = {x, y, theta, w, h}: center (x, y) in pixels,
/// theta = gripper closing angle vs. horizontal in [-90, 90) degrees,
/// w = plate size, h = gripper opening width (both in pixels, > 0).
struct GraspRect {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double w = 0.0;
  double h = 0.0;
};

inline bool is_valid(const GraspRect& g) {
  return std::isfinite(g.x) && std::isfinite(g.y) && std::isfinite(g.theta) &&
         g.theta >= -90.0 && g.theta < 90.0 && g.w > 0.0 && g.h > 0.0 &&
         std::isfinite(g.w) && std::isfinite(g.h);
}

inline void require_valid(const GraspRect& g) {
  if (!is_valid(g)) throw std::domain_error("GraspRect violates its invariants");
}

/// One of the 19 discrete 10-degree orientation bins covering 180 degrees.
struct AngleClass {
  int c = 1;

  AngleClass() = default;
  explicit AngleClass(int value) : c(value) {
    if (c < 1 || c > kCount) throw std::domain_error("angle class outside [1, 19]");
  }

  static constexpr int kCount = 19;
  friend bool operator==(AngleClass a, AngleClass b) { return a.c == b.c; }
};

/// class = round((theta + 90) / 10) + 1, round half away from zero.
/// theta must already be wrapped into [-90, 90).
inline AngleClass encode_angle(double theta) {
  if (!(theta >= -90.0 && theta < 90.0))
    throw std::domain_error("encode_angle: theta outside [-90, 90)");
  return AngleClass(static_cast<int>(std::lround((theta + 90.0) / 10.0)) + 1);
}

/// Bin-center inverse of encode_angle: (c - 1) * 10 - 90. Returns +90 for
/// class 19, which wraps to -90 as a physical angle.
inline double decode_angle(AngleClass c) { return (c.c - 1) * 10.0 - 90.0; }

/// Vertex list of a grasp rectangle, consecutive order around the box.
using QuadGrasp = std::array<Vec2, 4>;

// Cornell edge convention: the first edge (v1->v2) of a QuadGrasp is the
// plate edge (length w). Flip to false if a dataset uses the opposite order.
constexpr bool kPlateEdgeFirst = true;

/// Corners of the w-by-h box centered at (x, y) rotated by theta, starting at
/// local (-w/2, -h/2), counter-clockwise (positive shoelace area).
inline QuadGrasp rect_to_polygon(const GraspRect& g) {
  require_valid(g);
  const double c = std::cos(deg2rad(g.theta)), s = std::sin(deg2rad(g.theta));
  const double hw = 0.5 * g.w, hh = 0.5 * g.h;
  auto corner = [&](double dx, double dy) -> Vec2 {
    return {g.x + dx * c - dy * s, g.y + dx * s + dy * c};
  };
  return {corner(-hw, -hh), corner(hw, -hh), corner(hw, hh), corner(-hw, hh)};
}

/// Inverse of rect_to_polygon: center = vertex mean, theta = direction of the
/// plate edge wrapped to [-90, 90), w = |plate edge|, h = |adjacent edge|.
inline GraspRect quad_to_rect(const QuadGrasp& q) {
  const Vec2 e1 = q[1] - q[0];
  const Vec2 e2 = q[2] - q[1];
  const double w = kPlateEdgeFirst ? norm(e1) : norm(e2);
  const double h = kPlateEdgeFirst ? norm(e2) : norm(e1);
  if (!(w > 1e-9 && h > 1e-9))
    throw std::domain_error("quad_to_rect: degenerate (zero-area) quad");
  const Vec2 we = kPlateEdgeFirst ? e1 : e2;
  GraspRect g;
  g.x = 0.25 * (q[0].x + q[1].x + q[2].x + q[3].x);
  g.y = 0.25 * (q[0].y + q[1].y + q[2].y + q[3].y);
  g.theta = wrap_angle_deg(rad2deg(std::atan2(we.y, we.x)));
  g.w = w;
  g.h = h;
  return g;
}

/// Signed shoelace area; positive for counter-clockwise vertex order.
inline double polygon_signed_area(const std::vector<Vec2>& p) {
  double a = 0.0;
  for (size_t i = 0, n = p.size(); i < n; ++i) {
    const Vec2& u = p[i];
    const Vec2& v = p[(i + 1) % n];
    a += cross(u, v);
  }
  return 0.5 * a;
}

inline double polygon_area(const std::vector<Vec2>& p) {
  return std::abs(polygon_signed_area(p));
}

/// Area-weighted centroid; falls back to the vertex mean for zero-area input.
inline Vec2 polygon_centroid(const std::vector<Vec2>& p) {
  double a = 0.0, cx = 0.0, cy = 0.0;
  for (size_t i = 0, n = p.size(); i < n; ++i) {
    const Vec2& u = p[i];
    const Vec2& v = p[(i + 1) % n];
    const double w = cross(u, v);
    a += w;
    cx += (u.x + v.x) * w;
    cy += (u.y + v.y) * w;
  }
  if (std::abs(a) < 1e-12) {
    Vec2 m;
    for (const Vec2& u : p) m = m + u;
    return (1.0 / static_cast<double>(p.size())) * m;
  }
  return {cx / (3.0 * a), cy / (3.0 * a)};
}

/// Convex hull (monotone chain), counter-clockwise, no duplicate endpoint.
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }),
            pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  size_t k = 0;
  for (size_t i = 0; i < pts.size(); ++i) {  // lower
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {  // upper
    while (k >= t && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

namespace detail {

// Sutherland-Hodgman: clip a convex subject polygon by the half-plane to the
// left of edge a->b (polygons in counter-clockwise order). Points on the edge
// are kept; kClipEps absorbs rounding for vertices exactly on the line.
constexpr double kClipEps = 1e-9;

inline std::vector<Vec2> clip_halfplane(const std::vector<Vec2>& poly, Vec2 a, Vec2 b) {
  std::vector<Vec2> out;
  out.reserve(poly.size() + 1);
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec2 p = poly[i];
    const Vec2 q = poly[(i + 1) % n];
    const double dp = cross(b - a, p - a);
    const double dq = cross(b - a, q - a);
    if (dp >= -kClipEps) out.push_back(p);
    if ((dp >= -kClipEps) != (dq >= -kClipEps)) {
      const double t = dp / (dp - dq);
      out.push_back(p + t * (q - p));
    }
  }
  return out;
}

inline std::vector<Vec2> ccw(const QuadGrasp& q) {
  std::vector<Vec2> p(q.begin(), q.end());
  if (polygon_signed_area(p) < 0.0) std::reverse(p.begin(), p.end());
  return p;
}

}  // namespace detail

/// Intersection area of two convex quads by polygon clipping.
inline double quad_intersection_area(const QuadGrasp& qa, const QuadGrasp& qb) {
  std::vector<Vec2> poly = detail::ccw(qa);
  const std::vector<Vec2> clip = detail::ccw(qb);
  for (size_t i = 0; i < clip.size() && poly.size() > 2; ++i)
    poly = detail::clip_halfplane(poly, clip[i], clip[(i + 1) % clip.size()]);
  if (poly.size() < 3) return 0.0;
  return polygon_area(poly);
}

/// Jaccard index J(a, b) = area(a n b) / area(a u b) of two grasp rectangles.
inline double jaccard(const GraspRect& a, const GraspRect& b) {
  require_valid(a);
  require_valid(b);
  const QuadGrasp qa = rect_to_polygon(a), qb = rect_to_polygon(b);
  const double inter = quad_intersection_area(qa, qb);
  const std::vector<Vec2> va(qa.begin(), qa.end()), vb(qb.begin(), qb.end());
  const double uni = polygon_area(va) + polygon_area(vb) - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Orientation distance under 180-degree plate symmetry, in [0, 90].
inline double angle_distance(double t1, double t2) {
  double d = std::fmod(std::abs(t1 - t2), 180.0);
  return std::min(d, 180.0 - d);
}

/// Rectangle metric: a prediction matches a ground truth iff the orientation
/// differs by at most angle_max degrees and the Jaccard index is strictly
/// greater than iou_min.
inline bool is_match(const GraspRect& pred, const GraspRect& gt,
                     double iou_min = 0.25, double angle_max = 30.0) {
  if (!(iou_min > 0.0 && iou_min <= 1.0))
    throw std::domain_error("is_match: iou_min outside (0, 1]");
  if (!(angle_max > 0.0 && angle_max <= 90.0))
    throw std::domain_error("is_match: angle_max outside (0, 90]");
  if (angle_distance(pred.theta, gt.theta) > angle_max) return false;
  return jaccard(pred, gt) > iou_min;
}

}  // namespace semgrasp
