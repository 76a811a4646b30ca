#pragma once

// Rotated boxes, 4-parameter similarity transforms and rotated-box overlap.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <complex>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "propsel/error.hpp"
#include "propsel/image.hpp"

namespace propsel {

/// Maps any angle in degrees onto (-180, 180].
inline double normalize_angle(double deg) {
  double a = std::fmod(deg, 360.0);
  if (a <= -180.0) a += 360.0;
  if (a > 180.0) a -= 360.0;
  return a;
}

/// Signed difference a - b wrapped onto (-180, 180].
inline double angle_diff(double a, double b) { return normalize_angle(a - b); }

struct RotatedBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 1.0;
  double h = 1.0;
  double angle = 0.0;  // degrees, (-180, 180]

  Point center() const { return {cx, cy}; }
  double area() const { return w * h; }
  bool valid() const {
    return std::isfinite(cx) && std::isfinite(cy) && std::isfinite(angle) && w > 0.0 && h > 0.0 &&
           std::isfinite(w) && std::isfinite(h);
  }

  /// Corners in the order (-,-), (+,-), (+,+), (-,+) of the box-local axes;
  /// positive shoelace area in image coordinates.
  std::array<Point, 4> corners() const {
    const Point c{cx, cy};
    return {c + rotate({-w / 2, -h / 2}, angle), c + rotate({w / 2, -h / 2}, angle),
            c + rotate({w / 2, h / 2}, angle), c + rotate({-w / 2, h / 2}, angle)};
  }

  /// Coordinates of `p` in the box frame (origin at the center, axes along w and h).
  Point to_local(Point p) const { return rotate(p - center(), -angle); }

  bool contains(Point p) const {
    const Point l = to_local(p);
    return std::abs(l.x) <= w / 2 && std::abs(l.y) <= h / 2;
  }

  friend bool operator==(const RotatedBox&, const RotatedBox&) = default;
};

struct Rect {
  double x = 0.0;  // left
  double y = 0.0;  // top
  double w = 0.0;
  double h = 0.0;

  RotatedBox as_box() const { return {x + w / 2, y + h / 2, w, h, 0.0}; }
};

/// Axis-aligned bounds of the box polygon.
inline Rect bounding_rect(const RotatedBox& b) {
  const auto c = b.corners();
  double x0 = c[0].x, x1 = c[0].x, y0 = c[0].y, y1 = c[0].y;
  for (const auto& p : c) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  return {x0, y0, x1 - x0, y1 - y0};
}

struct Similarity {
  double s = 1.0;
  double theta = 0.0;  // degrees
  double tx = 0.0;
  double ty = 0.0;

  std::complex<double> coefficient() const { return std::polar(s, deg2rad(theta)); }

  Point apply(Point p) const {
    const auto q = coefficient() * std::complex<double>(p.x, p.y);
    return {q.real() + tx, q.imag() + ty};
  }
};

struct Correspondence {
  Point p;  // frame t-1
  Point q;  // frame t
};

/// Closed-form two-point solve of q = c p + d over the complex plane.
inline Similarity similarity_from_pair(const Correspondence& a, const Correspondence& b) {
  using C = std::complex<double>;
  const C pa(a.p.x, a.p.y), pb(b.p.x, b.p.y), qa(a.q.x, a.q.y), qb(b.q.x, b.q.y);
  const C dp = pb - pa;
  if (std::abs(dp) == 0.0) throw Error(ErrorCode::Degenerate, "coincident source points");
  const C c = (qb - qa) / dp;
  if (!(std::abs(c) > 0.0) || !std::isfinite(std::abs(c)))
    throw Error(ErrorCode::Degenerate, "pair maps to a zero-scale transform");
  const C d = qa - c * pa;
  return {std::abs(c), normalize_angle(rad2deg(std::arg(c))), d.real(), d.imag()};
}

/// T2 after T1.
inline Similarity compose(const Similarity& t2, const Similarity& t1) {
  const Point t = t2.apply({t1.tx, t1.ty});
  return {t2.s * t1.s, normalize_angle(t2.theta + t1.theta), t.x, t.y};
}

inline Similarity inverse(const Similarity& t) {
  const Point r = rotate({t.tx, t.ty}, -t.theta);
  return {1.0 / t.s, normalize_angle(-t.theta), -r.x / t.s, -r.y / t.s};
}

inline RotatedBox apply_similarity(const Similarity& t, const RotatedBox& box) {
  const Point c = t.apply(box.center());
  return {c.x, c.y, box.w * t.s, box.h * t.s, normalize_angle(box.angle + t.theta)};
}

// ---------------------------------------------------------------------------
// Polygons

inline double polygon_area(const std::vector<Point>& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point& p = poly[i];
    const Point& q = poly[(i + 1) % poly.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

/// Sutherland-Hodgman clip of `subject` against a convex, positively oriented `clip`.
inline std::vector<Point> clip_convex(std::vector<Point> subject, const std::vector<Point>& clip) {
  auto side = [](Point e0, Point e1, Point p) {
    return (e1.x - e0.x) * (p.y - e0.y) - (e1.y - e0.y) * (p.x - e0.x);
  };
  for (std::size_t i = 0; i < clip.size() && !subject.empty(); ++i) {
    const Point e0 = clip[i];
    const Point e1 = clip[(i + 1) % clip.size()];
    std::vector<Point> out;
    out.reserve(subject.size() + 2);
    for (std::size_t j = 0; j < subject.size(); ++j) {
      const Point cur = subject[j];
      const Point prev = subject[(j + subject.size() - 1) % subject.size()];
      const double sc = side(e0, e1, cur);
      const double sp = side(e0, e1, prev);
      if (sc >= 0) {
        if (sp < 0) {
          const double t = sp / (sp - sc);
          out.push_back(prev + t * (cur - prev));
        }
        out.push_back(cur);
      } else if (sp >= 0) {
        const double t = sp / (sp - sc);
        out.push_back(prev + t * (cur - prev));
      }
    }
    subject = std::move(out);
  }
  return subject;
}

namespace detail {

inline bool same_polygon(const std::array<Point, 4>& a, const std::array<Point, 4>& b) {
  auto close = [](Point p, Point q) {
    const double tol = 1e-9 * std::max({1.0, std::abs(p.x), std::abs(p.y)});
    return std::abs(p.x - q.x) <= tol && std::abs(p.y - q.y) <= tol;
  };
  for (int shift = 0; shift < 4; ++shift) {
    bool all = true;
    for (int i = 0; i < 4 && all; ++i) all = close(a[i], b[(i + shift) % 4]);
    if (all) return true;
  }
  return false;
}

}  // namespace detail

inline double intersection_area(const RotatedBox& a, const RotatedBox& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const auto inter = clip_convex({ca.begin(), ca.end()}, {cb.begin(), cb.end()});
  if (inter.size() < 3) return 0.0;
  return std::max(0.0, polygon_area(inter));
}

inline double polygon_iou(const RotatedBox& a, const RotatedBox& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  if (detail::same_polygon(ca, cb)) return 1.0;
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Text formats: VOT polygons "x1,y1,...,x4,y4" and OTB rects "x,y,w,h".

/// Least-squares fit of a rotated rectangle to four corners given in
/// (-,-), (+,-), (+,+), (-,+) order.
inline RotatedBox fit_rotated_box(const std::array<Point, 4>& pts) {
  Point c{0, 0};
  for (const auto& p : pts) c = c + 0.25 * p;
  static constexpr int sx[4] = {-1, 1, 1, -1};
  static constexpr int sy[4] = {-1, -1, 1, 1};
  Point a{0, 0}, b{0, 0};
  for (int k = 0; k < 4; ++k) {
    const Point q = pts[k] - c;
    a = a + static_cast<double>(sx[k]) * q;
    b = b + static_cast<double>(sy[k]) * q;
  }
  // Maximize (a.u)^2 + (b.v)^2 over u = (cos t, sin t), v = (-sin t, cos t).
  const double m00 = a.x * a.x + b.y * b.y;
  const double m11 = a.y * a.y + b.x * b.x;
  const double m01 = a.x * a.y - b.x * b.y;
  const double t = 0.5 * std::atan2(2.0 * m01, m00 - m11);
  Point u{std::cos(t), std::sin(t)};
  if (a.x * u.x + a.y * u.y < 0) u = {-u.x, -u.y};
  const Point v{-u.y, u.x};
  const double half_w = 0.25 * (a.x * u.x + a.y * u.y);
  const double half_h = 0.25 * (b.x * v.x + b.y * v.y);
  if (!(half_w > 0.0) || half_h == 0.0)
    throw Error(ErrorCode::Degenerate, "polygon does not describe a rectangle");
  double angle = rad2deg(std::atan2(u.y, u.x));
  return {c.x, c.y, 2 * half_w, 2 * std::abs(half_h), normalize_angle(angle)};
}

inline std::vector<double> parse_numbers(std::string_view line) {
  std::vector<double> out;
  std::size_t pos = 0;
  auto is_sep = [](char ch) { return ch == ',' || ch == ' ' || ch == '\t' || ch == '\r'; };
  while (pos < line.size()) {
    while (pos < line.size() && is_sep(line[pos])) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && !is_sep(line[end])) ++end;
    double v = 0.0;
    const char* first = line.data() + pos;
    const char* last = line.data() + end;
    if (*first == '+') ++first;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last || !std::isfinite(v))
      throw Error(ErrorCode::Format, "not a number: '" + std::string(line.substr(pos, end - pos)) + "'");
    out.push_back(v);
    pos = end;
  }
  return out;
}

/// Accepts either an 8-number VOT polygon or a 4-number OTB rect.
inline RotatedBox parse_box(std::string_view line) {
  const auto v = parse_numbers(line);
  if (v.size() == 8) {
    return fit_rotated_box({Point{v[0], v[1]}, Point{v[2], v[3]}, Point{v[4], v[5]},
                            Point{v[6], v[7]}});
  }
  if (v.size() == 4) {
    if (!(v[2] > 0.0) || !(v[3] > 0.0)) throw Error(ErrorCode::Format, "rect with non-positive size");
    return Rect{v[0], v[1], v[2], v[3]}.as_box();
  }
  throw Error(ErrorCode::Format, "expected 4 or 8 numbers, got " + std::to_string(v.size()));
}

inline std::string format_number(double v) {
  if (v == 0.0) v = 0.0;  // drop negative zero
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_polygon(const RotatedBox& b) {
  std::string out;
  for (const auto& p : b.corners()) {
    if (!out.empty()) out += ',';
    out += format_number(p.x) + ',' + format_number(p.y);
  }
  return out;
}

inline std::string format_rect(const Rect& r) {
  return format_number(r.x) + ',' + format_number(r.y) + ',' + format_number(r.w) + ',' +
         format_number(r.h);
}

}  // namespace propsel
