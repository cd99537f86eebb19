#pragma once

#include "centerline.hpp"
#include "core.hpp"
#include "io.hpp"
#include "tubemesh.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tubegcn {

using Vec2 = Eigen::Vector2d;
using Polygon2 = std::vector<Vec2>;

inline constexpr double kDicePixelMm = 0.05;

// ---------------------------------------------------------------------------
// Cross-sectional Dice

struct RasterOverlap {
  std::size_t area_a = 0;  // pixel counts
  std::size_t area_b = 0;
  std::size_t intersection = 0;
};

namespace detail {

// Sorted x coordinates where the horizontal line y crosses the polygon
// boundary (half-open rule on edge endpoints).
inline void scanline_crossings(const Polygon2& poly, double y, std::vector<double>& xs) {
  xs.clear();
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % n];
    if ((p.y() <= y) != (q.y() <= y)) xs.push_back(p.x() + (y - p.y()) * (q.x() - p.x()) / (q.y() - p.y()));
  }
  std::sort(xs.begin(), xs.end());
}

}  // namespace detail

/// Pixel-center rasterization of two polygons (even-odd rule) on a shared grid
/// of `pixel` spacing over the union bounding box.
inline RasterOverlap rasterize_overlap(const Polygon2& a, const Polygon2& b, double pixel = kDicePixelMm) {
  require(a.size() >= 3 && b.size() >= 3, "polygons need at least 3 vertices");
  require(pixel > 0.0, "pixel size must be > 0");
  Vec2 lo = a.front(), hi = a.front();
  for (const auto* poly : {&a, &b})
    for (const auto& p : *poly) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  const auto nx = static_cast<long>(std::ceil((hi.x() - lo.x()) / pixel));
  const auto ny = static_cast<long>(std::ceil((hi.y() - lo.y()) / pixel));
  RasterOverlap out;
  std::vector<double> xa, xb;
  for (long iy = 0; iy < ny; ++iy) {
    const double y = lo.y() + (iy + 0.5) * pixel;
    detail::scanline_crossings(a, y, xa);
    detail::scanline_crossings(b, y, xb);
    std::size_t ka = 0, kb = 0;
    for (long ix = 0; ix < nx; ++ix) {
      const double x = lo.x() + (ix + 0.5) * pixel;
      while (ka < xa.size() && xa[ka] < x) ++ka;
      while (kb < xb.size() && xb[kb] < x) ++kb;
      const bool in_a = ka % 2 == 1, in_b = kb % 2 == 1;
      out.area_a += in_a;
      out.area_b += in_b;
      out.intersection += in_a && in_b;
    }
  }
  return out;
}

inline double polygon_dice(const Polygon2& a, const Polygon2& b, double pixel = kDicePixelMm) {
  const auto o = rasterize_overlap(a, b, pixel);
  const std::size_t denom = o.area_a + o.area_b;
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(o.intersection) / static_cast<double>(denom);
}

/// Closed polygon of one cross-section: vertex a at angle 2*pi*a/n, radius r[a].
inline Polygon2 cross_section_polygon(std::span<const double> radii) {
  const std::size_t n = radii.size();
  Polygon2 poly(n);
  for (std::size_t a = 0; a < n; ++a) {
    const double phi = 2.0 * kPi * static_cast<double>(a) / static_cast<double>(n);
    poly[a] = Vec2(radii[a] * std::cos(phi), radii[a] * std::sin(phi));
  }
  return poly;
}

inline double cross_section_dice(std::span<const double> pred, std::span<const double> ref, int n_angles,
                                 double pixel = kDicePixelMm) {
  require(static_cast<int>(pred.size()) == n_angles && static_cast<int>(ref.size()) == n_angles,
          "cross-section angle counts do not match");
  for (std::size_t a = 0; a < pred.size(); ++a) require(pred[a] > 0.0 && ref[a] > 0.0, "cross-section radii must be > 0");
  return polygon_dice(cross_section_polygon(pred), cross_section_polygon(ref), pixel);
}

/// Per-plane Dice for plane-major per-vertex radii.
inline std::vector<double> plane_dice(std::span<const double> pred, std::span<const double> ref, int n_planes, int n_angles,
                                      double pixel = kDicePixelMm) {
  require(pred.size() == ref.size(), "prediction and reference radii differ in length");
  require(pred.size() == static_cast<std::size_t>(n_planes) * n_angles, "radii do not match the plane/angle counts");
  std::vector<double> out(static_cast<std::size_t>(n_planes));
  for (int i = 0; i < n_planes; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * n_angles;
    out[i] = cross_section_dice(pred.subspan(off, n_angles), ref.subspan(off, n_angles), n_angles, pixel);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Surface distances

/// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection 5.1.5).
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

inline double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  return (p - closest_point_on_triangle(p, a, b, c)).norm();
}

inline bool is_degenerate(const Mesh& m, const Triangle& t) {
  const Vec3& a = m.positions[t[0]];
  const Vec3& b = m.positions[t[1]];
  const Vec3& c = m.positions[t[2]];
  const double scale = std::max({(b - a).squaredNorm(), (c - a).squaredNorm(), (c - b).squaredNorm()});
  return scale == 0.0 || (b - a).cross(c - a).norm() <= 1e-12 * scale;
}

/// Uniform grid over a mesh's triangles for exact nearest-surface queries.
class TriangleGrid {
 public:
  explicit TriangleGrid(const Mesh& mesh) : mesh_(mesh) {
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
      if (is_degenerate(mesh, mesh.triangles[t])) {
        ++degenerate_;
        continue;
      }
      live_.push_back(static_cast<int>(t));
    }
    require(!live_.empty(), "mesh has no non-degenerate triangles");
    lo_ = hi_ = mesh.positions[mesh.triangles[live_.front()][0]];
    double edge_sum = 0.0;
    for (int t : live_) {
      const auto& tri = mesh.triangles[t];
      for (int k = 0; k < 3; ++k) {
        const Vec3& p = mesh.positions[tri[k]];
        require(p.allFinite(), "mesh has non-finite coordinates");
        lo_ = lo_.cwiseMin(p);
        hi_ = hi_.cwiseMax(p);
        edge_sum += (mesh.positions[tri[(k + 1) % 3]] - p).norm();
      }
    }
    cell_ = std::max(1.5 * edge_sum / (3.0 * live_.size()), 1e-9);
    constexpr int kMaxCells = 128;
    for (int a = 0; a < 3; ++a) cell_ = std::max(cell_, (hi_[a] - lo_[a]) / kMaxCells);
    for (int a = 0; a < 3; ++a) n_[a] = std::max(1, static_cast<int>(std::floor((hi_[a] - lo_[a]) / cell_)) + 1);
    cells_.assign(static_cast<std::size_t>(n_[0]) * n_[1] * n_[2], {});
    for (int t : live_) {
      const auto& tri = mesh.triangles[t];
      Vec3 tlo = mesh.positions[tri[0]], thi = tlo;
      for (int k = 1; k < 3; ++k) {
        tlo = tlo.cwiseMin(mesh.positions[tri[k]]);
        thi = thi.cwiseMax(mesh.positions[tri[k]]);
      }
      const auto c0 = cell_of(tlo), c1 = cell_of(thi);
      for (int z = clampi(c0[2], 2); z <= clampi(c1[2], 2); ++z)
        for (int y = clampi(c0[1], 1); y <= clampi(c1[1], 1); ++y)
          for (int x = clampi(c0[0], 0); x <= clampi(c1[0], 0); ++x) cells_[flat(x, y, z)].push_back(t);
    }
    stamp_.assign(mesh.triangles.size(), -1);
  }

  std::size_t degenerate_count() const { return degenerate_; }

  /// Exact distance from p to the nearest non-degenerate triangle.
  double distance(const Vec3& p) {
    ++query_;
    const auto c = cell_of(p);
    int r_max = 0;
    for (int a = 0; a < 3; ++a) r_max = std::max({r_max, std::abs(c[a]), std::abs(c[a] - (n_[a] - 1))});
    double best2 = std::numeric_limits<double>::infinity();
    for (int r = 0; r <= r_max; ++r) {
      for (int z = std::max(c[2] - r, 0); z <= std::min(c[2] + r, n_[2] - 1); ++z)
        for (int y = std::max(c[1] - r, 0); y <= std::min(c[1] + r, n_[1] - 1); ++y)
          for (int x = std::max(c[0] - r, 0); x <= std::min(c[0] + r, n_[0] - 1); ++x) {
            if (std::max({std::abs(x - c[0]), std::abs(y - c[1]), std::abs(z - c[2])}) != r) continue;
            for (int t : cells_[flat(x, y, z)]) {
              if (stamp_[t] == query_) continue;
              stamp_[t] = query_;
              const auto& tri = mesh_.triangles[t];
              const Vec3 q = closest_point_on_triangle(p, mesh_.positions[tri[0]], mesh_.positions[tri[1]], mesh_.positions[tri[2]]);
              best2 = std::min(best2, (p - q).squaredNorm());
            }
          }
      const double bound = r * cell_;
      if (best2 <= bound * bound) break;
    }
    return std::sqrt(best2);
  }

 private:
  std::array<int, 3> cell_of(const Vec3& p) const {
    std::array<int, 3> c{};
    for (int a = 0; a < 3; ++a) {
      const double u = std::floor((p[a] - lo_[a]) / cell_);
      c[a] = static_cast<int>(std::clamp(u, -1e6, 1e6));
    }
    return c;
  }
  int clampi(int v, int axis) const { return std::clamp(v, 0, n_[axis] - 1); }
  std::size_t flat(int x, int y, int z) const {
    return static_cast<std::size_t>(x) + static_cast<std::size_t>(n_[0]) * (y + static_cast<std::size_t>(n_[1]) * z);
  }

  const Mesh& mesh_;
  std::vector<int> live_;
  std::size_t degenerate_ = 0;
  Vec3 lo_, hi_;
  double cell_ = 1.0;
  std::array<int, 3> n_{1, 1, 1};
  std::vector<std::vector<int>> cells_;
  std::vector<long> stamp_;
  long query_ = 0;
};

/// Surface sample points: all vertices, non-degenerate triangle centroids,
/// and midpoints of their unique edges.
inline std::vector<Vec3> surface_samples(const Mesh& m) {
  std::vector<Vec3> pts = m.positions;
  std::set<std::pair<int, int>> edges;
  for (const auto& t : m.triangles) {
    if (is_degenerate(m, t)) continue;
    pts.push_back((m.positions[t[0]] + m.positions[t[1]] + m.positions[t[2]]) / 3.0);
    for (int k = 0; k < 3; ++k) {
      const int u = t[k], v = t[(k + 1) % 3];
      edges.emplace(std::min(u, v), std::max(u, v));
    }
  }
  for (const auto& [u, v] : edges) pts.push_back(0.5 * (m.positions[u] + m.positions[v]));
  return pts;
}

struct SurfaceDistances {
  double msd = 0.0;  // symmetric mean surface distance, mm
  double hd = 0.0;   // Hausdorff distance, mm
  std::size_t degenerate_skipped = 0;
};

inline std::vector<double> directed_distances(const Mesh& from, TriangleGrid& to) {
  const auto samples = surface_samples(from);
  std::vector<double> d(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) d[i] = to.distance(samples[i]);
  return d;
}

inline SurfaceDistances surface_distances(const Mesh& a, const Mesh& b) {
  require(!a.positions.empty() && !a.triangles.empty(), "first mesh is empty");
  require(!b.positions.empty() && !b.triangles.empty(), "second mesh is empty");
  for (const auto* m : {&a, &b})
    for (const auto& p : m->positions) require(p.allFinite(), "mesh has non-finite coordinates");
  TriangleGrid grid_a(a), grid_b(b);
  const auto dab = directed_distances(a, grid_b);
  const auto dba = directed_distances(b, grid_a);
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  SurfaceDistances out;
  out.msd = 0.5 * (mean(dab) + mean(dba));
  out.hd = std::max(*std::max_element(dab.begin(), dab.end()), *std::max_element(dba.begin(), dba.end()));
  out.degenerate_skipped = grid_a.degenerate_count() + grid_b.degenerate_count();
  return out;
}

// ---------------------------------------------------------------------------
// Roughness: mean |second difference| of radii along rails.

inline double surface_roughness(std::span<const double> radii, int n_planes, int n_angles) {
  require(n_planes >= 3, "roughness needs at least 3 planes");
  require(radii.size() == static_cast<std::size_t>(n_planes) * n_angles, "radii do not match the plane/angle counts");
  double sum = 0.0;
  for (int i = 1; i + 1 < n_planes; ++i)
    for (int a = 0; a < n_angles; ++a) {
      const auto at = [&](int plane) { return radii[static_cast<std::size_t>(plane) * n_angles + a]; };
      sum += std::abs(at(i - 1) - 2.0 * at(i) + at(i + 1));
    }
  return sum / (static_cast<double>(n_planes - 2) * n_angles);
}

inline double surface_roughness(const TubeGraph& g) {
  require(g.has_radii(), "radii are not populated");
  return surface_roughness(g.radii, g.n_planes, g.n_angles);
}

// ---------------------------------------------------------------------------
// Reports

struct SegmentMetrics {
  std::string id;
  std::string stratum;  // e.g. "healthy" / "diseased"; may be empty
  double dsc = 0.0;
  double msd_mm = 0.0;
  double hd_mm = 0.0;
  double roughness_mm = 0.0;
  std::vector<double> plane_dsc;
};

/// All metrics for one tube: predicted and reference radii share the
/// centerline, frames and angles.
inline SegmentMetrics evaluate_segment(const std::string& id, const Centerline& cl, const TubeGraph& topology,
                                       std::span<const double> pred, std::span<const double> ref,
                                       const std::string& stratum = "") {
  require(pred.size() == ref.size() && static_cast<int>(pred.size()) == topology.vertex_count(),
          "radii do not match the tube topology");
  SegmentMetrics m;
  m.id = id;
  m.stratum = stratum;
  m.plane_dsc = plane_dice(pred, ref, topology.n_planes, topology.n_angles);
  double s = 0.0;
  for (double d : m.plane_dsc) s += d;
  m.dsc = s / static_cast<double>(m.plane_dsc.size());
  TubeGraph g = topology;
  g.radii.assign(pred.begin(), pred.end());
  Mesh mp{realize_positions(g, cl), g.triangles};
  g.radii.assign(ref.begin(), ref.end());
  Mesh mr{realize_positions(g, cl), g.triangles};
  const auto sd = surface_distances(mp, mr);
  m.msd_mm = sd.msd;
  m.hd_mm = sd.hd;
  m.roughness_mm = topology.n_planes >= 3 ? surface_roughness(pred, topology.n_planes, topology.n_angles) : 0.0;
  return m;
}

struct MetricsAggregate {
  std::size_t count = 0;
  double dsc = 0.0, msd_mm = 0.0, hd_mm = 0.0, roughness_mm = 0.0;
};

struct MetricsReport {
  std::vector<SegmentMetrics> per_segment;

  static MetricsAggregate mean_of(const std::vector<const SegmentMetrics*>& rows) {
    MetricsAggregate a;
    a.count = rows.size();
    if (rows.empty()) return a;
    for (const auto* r : rows) {
      a.dsc += r->dsc;
      a.msd_mm += r->msd_mm;
      a.hd_mm += r->hd_mm;
      a.roughness_mm += r->roughness_mm;
    }
    const double n = static_cast<double>(rows.size());
    a.dsc /= n;
    a.msd_mm /= n;
    a.hd_mm /= n;
    a.roughness_mm /= n;
    return a;
  }

  MetricsAggregate aggregate() const {
    std::vector<const SegmentMetrics*> rows;
    for (const auto& r : per_segment) rows.push_back(&r);
    return mean_of(rows);
  }

  std::map<std::string, MetricsAggregate> strata() const {
    std::map<std::string, std::vector<const SegmentMetrics*>> groups;
    for (const auto& r : per_segment)
      if (!r.stratum.empty()) groups[r.stratum].push_back(&r);
    std::map<std::string, MetricsAggregate> out;
    for (const auto& [k, rows] : groups) out[k] = mean_of(rows);
    return out;
  }

  void append(const MetricsReport& other) {
    per_segment.insert(per_segment.end(), other.per_segment.begin(), other.per_segment.end());
  }
};

namespace metrics_io {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// segment,stratum,dsc,msd_mm,hd_mm,roughness_mm; then aggregate rows.
inline std::string to_csv(const MetricsReport& r) {
  std::string out = "segment,stratum,dsc,msd_mm,hd_mm,roughness_mm\n";
  auto row = [&](const std::string& id, const std::string& stratum, double dsc, double msd, double hd, double rough) {
    out += id + "," + stratum + "," + format_double(dsc) + "," + format_double(msd) + "," + format_double(hd) + "," +
           format_double(rough) + "\n";
  };
  for (const auto& s : r.per_segment) row(s.id, s.stratum, s.dsc, s.msd_mm, s.hd_mm, s.roughness_mm);
  const auto a = r.aggregate();
  row("mean", "all", a.dsc, a.msd_mm, a.hd_mm, a.roughness_mm);
  for (const auto& [k, g] : r.strata()) row("mean", k, g.dsc, g.msd_mm, g.hd_mm, g.roughness_mm);
  return out;
}

inline io::json aggregate_json(const MetricsAggregate& a) {
  return {{"count", a.count}, {"dsc", a.dsc}, {"msdMm", a.msd_mm}, {"hdMm", a.hd_mm}, {"roughnessMm", a.roughness_mm}};
}

inline io::json to_json(const MetricsReport& r, bool include_plane_dsc = false) {
  io::json segs = io::json::array();
  for (const auto& s : r.per_segment) {
    io::json j{{"segmentId", s.id},
               {"stratum", s.stratum},
               {"dsc", s.dsc},
               {"msdMm", s.msd_mm},
               {"hdMm", s.hd_mm},
               {"roughnessMm", s.roughness_mm}};
    if (include_plane_dsc) j["planeDsc"] = s.plane_dsc;
    segs.push_back(std::move(j));
  }
  io::json strata = io::json::object();
  for (const auto& [k, g] : r.strata()) strata[k] = aggregate_json(g);
  return {{"perSegment", segs}, {"aggregate", aggregate_json(r.aggregate())}, {"strata", strata}};
}

}  // namespace metrics_io

}  // namespace tubegcn
