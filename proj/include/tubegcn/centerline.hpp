#pragma once

#include "core.hpp"
#include "io.hpp"

#include <algorithm>
#include <vector>

namespace tubegcn {

/// Orthonormal cross-sectional frame. The plane at a centerline point is
/// spanned by (normal, binormal), and binormal = tangent x normal.
struct Frame {
  Vec3 tangent = Vec3::UnitZ();
  Vec3 normal = Vec3::UnitX();
  Vec3 binormal = Vec3::UnitY();
};

struct Centerline {
  std::vector<Vec3> points;
  std::vector<Frame> frames;  // empty until build_frames

  std::size_t size() const { return points.size(); }
  bool framed() const { return !points.empty() && frames.size() == points.size(); }

  /// Cumulative chord length at every point.
  std::vector<double> arclengths() const {
    std::vector<double> s(points.size(), 0.0);
    for (std::size_t i = 1; i < points.size(); ++i) s[i] = s[i - 1] + (points[i] - points[i - 1]).norm();
    return s;
  }

  double length() const {
    double total = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) total += (points[i] - points[i - 1]).norm();
    return total;
  }
};

inline void validate_polyline(const std::vector<Vec3>& pts) {
  require(pts.size() >= 2, "centerline needs at least 2 points");
  for (std::size_t i = 1; i < pts.size(); ++i) {
    require(pts[i].allFinite(), "centerline point is not finite");
    require((pts[i] - pts[i - 1]).norm() > 0.0, "centerline has coincident consecutive points at index " + std::to_string(i));
  }
}

/// Resample so that consecutive points are exactly `step` apart (chord
/// distance), walking forward along the piecewise-linear input. The input
/// endpoint is appended when the final interval is shorter than `step`.
inline Centerline resample(const Centerline& cl, double step) {
  require(step > 0.0, "resample step must be > 0");
  validate_polyline(cl.points);
  const auto& p = cl.points;
  const double total = cl.length();
  require(total >= step, "centerline is shorter than the resampling step");

  // Tolerance below which the endpoint is considered already emitted.
  const double eps = 1e-9 * std::max(1.0, step);

  Centerline out;
  out.points.push_back(p.front());
  Vec3 cur = p.front();
  std::size_t seg = 0;  // current point lies on segment [seg, seg+1]
  double seg_t = 0.0;   // parameter of `cur` on that segment
  while (true) {
    bool found = false;
    for (std::size_t j = seg; j + 1 < p.size(); ++j) {
      const Vec3 a = p[j];
      const Vec3 d = p[j + 1] - a;
      // Forward exit of the path from the sphere of radius step around cur.
      const double t_min = (j == seg) ? seg_t : 0.0;
      const Vec3 w = a - cur;
      const double qa = d.squaredNorm();
      const double qb = 2.0 * w.dot(d);
      const double qc = w.squaredNorm() - step * step;
      const double disc = qb * qb - 4.0 * qa * qc;
      if (disc < 0.0) continue;
      double t = (-qb + std::sqrt(disc)) / (2.0 * qa);
      // Slack absorbs rounding when the hit lands on a segment end.
      if (t >= t_min - 1e-12 && t <= 1.0 + 1e-12) {
        t = std::clamp(t, t_min, 1.0);
        cur = a + t * d;
        seg = j;
        seg_t = t;
        found = true;
        break;
      }
    }
    if (!found) break;
    out.points.push_back(cur);
  }
  if ((p.back() - out.points.back()).norm() > eps) out.points.push_back(p.back());
  return out;
}

namespace detail {

// Minimal rotation taking unit vector a to unit vector b, applied to x.
inline Vec3 rotate_between(const Vec3& a, const Vec3& b, const Vec3& x) {
  const Vec3 v = a.cross(b);
  const double c = a.dot(b);
  return x * c + v.cross(x) + v * (v.dot(x) / (1.0 + c));
}

inline Vec3 initial_normal(const Vec3& t) {
  int axis = 0;
  for (int a = 1; a < 3; ++a)
    if (std::abs(t[a]) < std::abs(t[axis]) - 1e-12) axis = a;
  Vec3 e = Vec3::Zero();
  e[axis] = 1.0;
  return (e - t.dot(e) * t).normalized();
}

}  // namespace detail

/// Tangent estimates: central differences in the interior. At an end the
/// tangent of the neighbouring point is reflected about the end chord.
inline std::vector<Vec3> estimate_tangents(const std::vector<Vec3>& p) {
  const std::size_t n = p.size();
  std::vector<Vec3> t(n);
  if (n == 2) {
    t[0] = t[1] = (p[1] - p[0]).normalized();
    return t;
  }
  // Non-uniform central difference |b|^2 a + |a|^2 b: the plain central
  // difference when both chords are equal, and exact on circles otherwise.
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const Vec3 a = p[i] - p[i - 1], b = p[i + 1] - p[i];
    const Vec3 w = b.squaredNorm() * a + a.squaredNorm() * b;
    require(w.norm() > 1e-12 * a.norm() * b.norm() * (a.norm() + b.norm()),
            "centerline kink: direction reverses at index " + std::to_string(i));
    t[i] = w.normalized();
  }
  auto reflect = [](const Vec3& inner, const Vec3& chord) {
    const Vec3 e = chord.normalized();
    Vec3 r = 2.0 * inner.dot(e) * e - inner;
    return r.norm() > 1e-12 ? r.normalized() : e;
  };
  t[0] = reflect(t[1], p[1] - p[0]);
  t[n - 1] = reflect(t[n - 2], p[n - 1] - p[n - 2]);
  return t;
}

/// Rotation-minimizing frames by parallel transport of the first normal.
inline Centerline build_frames(const Centerline& cl) {
  validate_polyline(cl.points);
  Centerline out;
  out.points = cl.points;
  const auto t = estimate_tangents(cl.points);
  out.frames.resize(t.size());

  Vec3 n = detail::initial_normal(t[0]);
  out.frames[0] = Frame{t[0], n, t[0].cross(n)};
  for (std::size_t i = 1; i < t.size(); ++i) {
    const double c = t[i - 1].dot(t[i]);
    require(c > -1.0 + 1e-6, "centerline kink: anti-parallel tangents at index " + std::to_string(i));
    n = detail::rotate_between(t[i - 1], t[i], n);
    n = (n - n.dot(t[i]) * t[i]).normalized();
    out.frames[i] = Frame{t[i], n, t[i].cross(n)};
  }
  return out;
}

// {"points": [[x, y, z], ...]} in mm.
namespace centerline_io {

inline io::json to_json(const Centerline& cl) {
  io::json pts = io::json::array();
  for (const auto& p : cl.points) pts.push_back(io::from_vec3(p));
  return io::json{{"points", pts}};
}

inline Centerline from_json(const io::json& j, const std::string& ctx = "centerline") {
  const auto pts = io::get_field<io::json>(j, "points", ctx);
  require(pts.is_array(), ctx + ": 'points' must be an array");
  Centerline cl;
  for (std::size_t i = 0; i < pts.size(); ++i) cl.points.push_back(io::to_vec3(pts[i], ctx + " point " + std::to_string(i)));
  validate_polyline(cl.points);
  return cl;
}

inline Centerline read(const io::fs::path& path) { return from_json(io::read_json(path), path.string()); }
inline void write(const Centerline& cl, const io::fs::path& path) { io::write_json(path, to_json(cl)); }

}  // namespace centerline_io

}  // namespace tubegcn
