#pragma once

#include "centerline.hpp"
#include "core.hpp"
#include "io.hpp"
#include "volume.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <vector>

namespace tubegcn {

/// Rays sample 32 x 0.1 mm, so any lumen radius must stay below this.
inline constexpr double kRayFieldOfViewMm = 3.2;
inline constexpr double kDefaultPhantomSpacingMm = 0.35;

enum class CurveType { straight, helix, spline };

struct CurveSpec {
  CurveType type = CurveType::straight;
  // straight
  Vec3 start = Vec3::Zero();
  Vec3 end = Vec3(0, 0, 20);
  // helix around an axis parallel to z through `center`
  Vec3 center = Vec3::Zero();
  double helix_radius = 5.0;
  double pitch = 20.0;  // mm per turn
  double turns = 1.0;
  // spline: uniform Catmull-Rom through the control points
  std::vector<Vec3> control_points;
};

struct Stenosis {
  double center_mm = 0.0;  // arclength
  double length_mm = 3.0;  // full width of the narrowing
  double severity = 0.4;   // fractional radius reduction at the center
};

/// Lumen radius as a function of arclength: a piecewise-linear base (or a
/// constant nominal radius) times raised-cosine narrowings.
struct RadiusProfile {
  double nominal_mm = 1.5;
  std::vector<std::array<double, 2>> knots;  // (arclength, radius), sorted by arclength
  std::vector<Stenosis> stenoses;

  double base(double s) const {
    if (knots.empty()) return nominal_mm;
    if (s <= knots.front()[0]) return knots.front()[1];
    if (s >= knots.back()[0]) return knots.back()[1];
    auto it = std::upper_bound(knots.begin(), knots.end(), s, [](double x, const auto& k) { return x < k[0]; });
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double w = (s - lo[0]) / (hi[0] - lo[0]);
    return (1.0 - w) * lo[1] + w * hi[1];
  }

  double at(double s) const {
    double r = base(s);
    for (const auto& st : stenoses) {
      const double half = 0.5 * st.length_mm;
      const double x = s - st.center_mm;
      if (std::abs(x) < half) r *= 1.0 - st.severity * 0.5 * (1.0 + std::cos(kPi * x / half));
    }
    return r;
  }

  double max_base() const {
    if (knots.empty()) return nominal_mm;
    double m = 0.0;
    for (const auto& k : knots) m = std::max(m, k[1]);
    return m;
  }

  double min_base() const {
    if (knots.empty()) return nominal_mm;
    double m = std::numeric_limits<double>::infinity();
    for (const auto& k : knots) m = std::min(m, k[1]);
    return m;
  }
};

struct Calcification {
  Vec3 center = Vec3::Zero();
  double radius_mm = 0.6;
  double hu = 900.0;
};

struct PhantomSpec {
  CurveSpec curve;
  RadiusProfile radius;
  double lumen_hu = 400.0;
  double background_hu = 50.0;
  std::vector<Calcification> calcifications;
  double noise_sigma_hu = 0.0;
  double blur_sigma_mm = 0.3;
  std::uint64_t seed = 0;
  // Straight extension painted past both centerline ends so that the
  // end planes see an unterminated tube.
  double end_extension_mm = 2.0;
};

/// Checks the spec invariants; the message names the offending field.
inline void validate(const PhantomSpec& s) {
  auto fail = [](const std::string& field, const std::string& why) { throw ValidationError("phantom spec field '" + field + "': " + why); };
  const auto& r = s.radius;
  if (!(r.knots.empty() ? r.nominal_mm > 0.0 : r.min_base() > 0.0)) fail("radiusProfile", "radius must be > 0");
  if (!(r.max_base() < kRayFieldOfViewMm)) fail("radiusProfile", "radius must be < ray field of view (3.2 mm)");
  for (std::size_t k = 1; k < r.knots.size(); ++k)
    if (!(r.knots[k][0] > r.knots[k - 1][0])) fail("radiusProfile.knots", "arclengths must be strictly increasing");
  for (const auto& st : r.stenoses) {
    if (!(st.severity >= 0.0 && st.severity < 1.0)) fail("radiusProfile.stenoses.severity", "must be in [0, 1)");
    if (!(st.length_mm > 0.0)) fail("radiusProfile.stenoses.length", "must be > 0");
  }
  if (!(s.lumen_hu > s.background_hu)) fail("lumenHU", "must exceed backgroundHU");
  if (!(s.noise_sigma_hu >= 0.0)) fail("noiseSigmaHU", "must be >= 0");
  if (!(s.blur_sigma_mm >= 0.0)) fail("blurSigmaMm", "must be >= 0");
  if (!(s.end_extension_mm >= 0.0)) fail("endExtensionMm", "must be >= 0");
  for (const auto& c : s.calcifications)
    if (!(c.radius_mm > 0.0)) fail("calcifications.radius", "must be > 0");
  switch (s.curve.type) {
    case CurveType::straight:
      if (!((s.curve.end - s.curve.start).norm() > 0.0)) fail("curve", "straight curve has zero length");
      break;
    case CurveType::helix:
      if (!(s.curve.helix_radius > 0.0 && s.curve.turns > 0.0)) fail("curve", "helix needs radius > 0 and turns > 0");
      break;
    case CurveType::spline:
      if (s.curve.control_points.size() < 2) fail("curve.points", "spline needs at least 2 control points");
      break;
  }
}

namespace detail {

inline Vec3 evaluate_curve(const CurveSpec& c, double u) {
  switch (c.type) {
    case CurveType::straight:
      return c.start + u * (c.end - c.start);
    case CurveType::helix: {
      const double a = 2.0 * kPi * c.turns * u;
      return c.center + Vec3(c.helix_radius * std::cos(a), c.helix_radius * std::sin(a), c.pitch * c.turns * u);
    }
    case CurveType::spline: {
      const auto& p = c.control_points;
      const int segs = static_cast<int>(p.size()) - 1;
      double x = std::clamp(u, 0.0, 1.0) * segs;
      int i = std::min(static_cast<int>(x), segs - 1);
      const double t = x - i;
      const Vec3 p1 = p[i], p2 = p[i + 1];
      const Vec3 p0 = i > 0 ? p[i - 1] : 2.0 * p1 - p2;
      const Vec3 p3 = i + 2 <= segs ? p[i + 2] : 2.0 * p2 - p1;
      const double t2 = t * t, t3 = t2 * t;
      return 0.5 * ((2.0 * p1) + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3);
    }
  }
  return Vec3::Zero();
}

/// Fine polyline of the curve with chords below `max_chord`.
inline std::vector<Vec3> dense_curve(const CurveSpec& c, double max_chord = 0.05) {
  double approx = 0.0;
  Vec3 prev = evaluate_curve(c, 0.0);
  constexpr int kProbe = 2000;
  for (int k = 1; k <= kProbe; ++k) {
    const Vec3 p = evaluate_curve(c, static_cast<double>(k) / kProbe);
    approx += (p - prev).norm();
    prev = p;
  }
  const int n = std::max(2, static_cast<int>(std::ceil(approx / max_chord)));
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) {
    const Vec3 p = evaluate_curve(c, static_cast<double>(k) / n);
    if (pts.empty() || (p - pts.back()).norm() > 1e-12) pts.push_back(p);
  }
  return pts;
}

struct PolylineHit {
  double distance2;
  double arclength;
};

inline PolylineHit closest_on_segment(const Vec3& q, const Vec3& a, const Vec3& b, double s0) {
  const Vec3 d = b - a;
  const double len2 = d.squaredNorm();
  double t = len2 > 0 ? std::clamp((q - a).dot(d) / len2, 0.0, 1.0) : 0.0;
  const Vec3 c = a + t * d;
  return {(q - c).squaredNorm(), s0 + t * std::sqrt(len2)};
}

inline void gaussian_blur_axis(std::vector<double>& data, const std::array<int, 3>& dims, int axis, double sigma_vox) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma_vox));
  if (radius == 0) return;
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) sum += kernel[k + radius] = std::exp(-0.5 * k * k / (sigma_vox * sigma_vox));
  for (auto& w : kernel) w /= sum;
  const int n = dims[axis];
  const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? static_cast<std::size_t>(dims[0]) : static_cast<std::size_t>(dims[0]) * dims[1]);
  std::vector<double> line(n), out(n);
  const int o1 = axis == 0 ? 1 : 0, o2 = axis == 2 ? 1 : 2;
  for (int b = 0; b < dims[o2]; ++b) {
    for (int a = 0; a < dims[o1]; ++a) {
      std::array<int, 3> idx{0, 0, 0};
      idx[o1] = a;
      idx[o2] = b;
      const std::size_t base = static_cast<std::size_t>(idx[0]) + static_cast<std::size_t>(dims[0]) * (idx[1] + static_cast<std::size_t>(dims[1]) * idx[2]);
      for (int i = 0; i < n; ++i) line[i] = data[base + i * stride];
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * line[std::clamp(i + k, 0, n - 1)];
        out[i] = acc;
      }
      for (int i = 0; i < n; ++i) data[base + i * stride] = out[i];
    }
  }
}

}  // namespace detail

struct GroundTruth {
  RadiusProfile profile;
  // Lookup table keyed by cumulative chord length along the written
  // centerline; radii are the profile evaluated at true curve arclength.
  std::vector<double> arclength;
  std::vector<double> radius;
  std::vector<Calcification> calcifications;
  bool diseased = false;

  double at(double s) const { return profile.at(s); }
};

struct Phantom {
  Volume volume;
  Centerline centerline;  // resampled, unframed
  GroundTruth truth;
};

struct PaintedCurve {
  std::vector<Vec3> points;       // dense polyline including end extensions
  std::vector<double> arclength;  // relative to the visible curve start
  std::vector<Vec3> visible;      // dense polyline of the visible curve
};

inline PaintedCurve painted_curve(const PhantomSpec& spec) {
  PaintedCurve pc;
  pc.visible = detail::dense_curve(spec.curve);
  const auto& v = pc.visible;
  const double ext = spec.end_extension_mm;
  const Vec3 t0 = (v[1] - v[0]).normalized();
  const Vec3 t1 = (v[v.size() - 1] - v[v.size() - 2]).normalized();
  if (ext > 0) pc.points.push_back(v.front() - ext * t0);
  pc.points.insert(pc.points.end(), v.begin(), v.end());
  if (ext > 0) pc.points.push_back(v.back() + ext * t1);
  pc.arclength.resize(pc.points.size());
  double s = ext > 0 ? -ext : 0.0;
  pc.arclength[0] = s;
  for (std::size_t i = 1; i < pc.points.size(); ++i) pc.arclength[i] = (s += (pc.points[i] - pc.points[i - 1]).norm());
  return pc;
}

/// Smallest grid (at the given spacing) that holds the painted curve plus the
/// maximal radius and the 3.2 mm ray field of view on every side, with one
/// voxel of slack.
inline std::array<int, 3> auto_dims(const PhantomSpec& spec, const Vec3& spacing) {
  const auto pc = painted_curve(spec);
  Vec3 lo = pc.points.front(), hi = lo;
  for (const auto& p : pc.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double margin = spec.radius.max_base() + kRayFieldOfViewMm;
  std::array<int, 3> dims{};
  for (int a = 0; a < 3; ++a) dims[a] = static_cast<int>(std::ceil((hi[a] - lo[a] + 2.0 * margin) / spacing[a])) + 3;
  return dims;
}

/// Voxelize the tube (lumen where distance to the curve < radius at the
/// closest curve point), overwrite calcification spheres, blur, add noise.
/// The volume is centred on the painted curve's bounding box.
inline Phantom generate_phantom(const PhantomSpec& spec, const std::array<int, 3>& dims, const Vec3& spacing) {
  validate(spec);
  for (int a = 0; a < 3; ++a) {
    require(dims[a] >= 2, "phantom dims must all be >= 2");
    require(spacing[a] > 0.0, "phantom spacing must all be > 0");
  }
  const PaintedCurve pc = painted_curve(spec);
  Vec3 lo = pc.points.front(), hi = lo;
  for (const auto& p : pc.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double margin = spec.radius.max_base() + kRayFieldOfViewMm;
  Vec3 extent;
  for (int a = 0; a < 3; ++a) {
    extent[a] = (dims[a] - 1) * spacing[a];
    require(extent[a] >= (hi[a] - lo[a]) + 2.0 * margin,
            "phantom grid too small on axis " + std::to_string(a) + ": need the curve plus radius plus 3.2 mm on each side");
  }
  // Snap the origin to a multiple of the spacing so reruns are bit-stable.
  Vec3 origin;
  for (int a = 0; a < 3; ++a) origin[a] = std::floor((0.5 * (lo[a] + hi[a]) - 0.5 * extent[a]) / spacing[a]) * spacing[a];

  Volume vol = Volume::filled(dims, spacing, origin, spec.background_hu);
  const std::size_t nvox = vol.voxel_count();
  std::vector<double> best_d2(nvox, std::numeric_limits<double>::infinity());
  std::vector<double> best_s(nvox, 0.0);
  const double reach = spec.radius.max_base() + spacing.maxCoeff();
  for (std::size_t j = 0; j + 1 < pc.points.size(); ++j) {
    const Vec3& a = pc.points[j];
    const Vec3& b = pc.points[j + 1];
    int i0[3], i1[3];
    for (int ax = 0; ax < 3; ++ax) {
      const double mn = std::min(a[ax], b[ax]) - reach, mx = std::max(a[ax], b[ax]) + reach;
      i0[ax] = std::max(0, static_cast<int>(std::floor((mn - origin[ax]) / spacing[ax])));
      i1[ax] = std::min(dims[ax] - 1, static_cast<int>(std::ceil((mx - origin[ax]) / spacing[ax])));
    }
    for (int k = i0[2]; k <= i1[2]; ++k)
      for (int jj = i0[1]; jj <= i1[1]; ++jj)
        for (int i = i0[0]; i <= i1[0]; ++i) {
          const std::size_t idx = vol.index(i, jj, k);
          const auto hit = detail::closest_on_segment(vol.voxel_center(i, jj, k), a, b, pc.arclength[j]);
          if (hit.distance2 < best_d2[idx]) {
            best_d2[idx] = hit.distance2;
            best_s[idx] = hit.arclength;
          }
        }
  }
  auto data = vol.data();
  for (std::size_t idx = 0; idx < nvox; ++idx) {
    if (!std::isfinite(best_d2[idx])) continue;
    const double r = spec.radius.at(best_s[idx]);
    if (std::sqrt(best_d2[idx]) < r) data[idx] = spec.lumen_hu;
  }
  for (const auto& c : spec.calcifications) {
    for (int k = 0; k < dims[2]; ++k)
      for (int j = 0; j < dims[1]; ++j)
        for (int i = 0; i < dims[0]; ++i)
          if ((vol.voxel_center(i, j, k) - c.center).norm() < c.radius_mm) vol.at(i, j, k) = c.hu;
  }
  if (spec.blur_sigma_mm > 0.0) {
    std::vector<double> buf(data.begin(), data.end());
    for (int ax = 0; ax < 3; ++ax) detail::gaussian_blur_axis(buf, dims, ax, spec.blur_sigma_mm / spacing[ax]);
    std::copy(buf.begin(), buf.end(), data.begin());
  }
  if (spec.noise_sigma_hu > 0.0) {
    Rng rng(spec.seed);
    for (auto& v : data) v += spec.noise_sigma_hu * rng.normal();
  }
  // Store float32-representable values so the on-disk volume equals this one.
  for (auto& v : data) v = static_cast<double>(static_cast<float>(v));

  Phantom ph;
  ph.volume = std::move(vol);
  Centerline dense;
  dense.points = pc.visible;
  ph.centerline = resample(dense, 0.5);
  // True arclength of each resampled point along the fine curve.
  std::vector<double> fine_s(pc.visible.size(), 0.0);
  for (std::size_t i = 1; i < fine_s.size(); ++i) fine_s[i] = fine_s[i - 1] + (pc.visible[i] - pc.visible[i - 1]).norm();
  std::size_t seg = 0;
  for (const auto& q : ph.centerline.points) {
    detail::PolylineHit best{std::numeric_limits<double>::infinity(), 0.0};
    std::size_t best_seg = seg;
    for (std::size_t j = seg; j + 1 < pc.visible.size(); ++j) {
      const auto hit = detail::closest_on_segment(q, pc.visible[j], pc.visible[j + 1], fine_s[j]);
      if (hit.distance2 < best.distance2) {
        best = hit;
        best_seg = j;
      }
      if (best.distance2 < 1e-18) break;
    }
    seg = best_seg;
    ph.truth.radius.push_back(spec.radius.at(best.arclength));
  }
  ph.truth.arclength = ph.centerline.arclengths();
  ph.truth.profile = spec.radius;
  ph.truth.calcifications = spec.calcifications;
  ph.truth.diseased = !spec.radius.stenoses.empty();
  return ph;
}

inline Phantom generate_phantom(const PhantomSpec& spec, const Vec3& spacing = Vec3::Constant(kDefaultPhantomSpacingMm)) {
  validate(spec);
  return generate_phantom(spec, auto_dims(spec, spacing), spacing);
}

// ---------------------------------------------------------------------------
// JSON

namespace phantom_io {

inline io::json to_json(const RadiusProfile& r) {
  io::json st = io::json::array();
  for (const auto& s : r.stenoses) st.push_back({{"center", s.center_mm}, {"length", s.length_mm}, {"severity", s.severity}});
  io::json j{{"nominal", r.nominal_mm}, {"stenoses", st}};
  if (!r.knots.empty()) j["knots"] = r.knots;
  return j;
}

inline RadiusProfile profile_from_json(const io::json& j) {
  const std::string ctx = "phantom spec field 'radiusProfile'";
  RadiusProfile r;
  if (j.is_number()) {
    r.nominal_mm = j.get<double>();
    return r;
  }
  r.nominal_mm = io::get_field_or<double>(j, "nominal", 1.5, ctx);
  if (j.contains("knots")) r.knots = io::get_field<std::vector<std::array<double, 2>>>(j, "knots", ctx);
  if (j.contains("stenoses")) {
    for (const auto& s : j.at("stenoses")) {
      Stenosis st;
      st.center_mm = io::get_field<double>(s, "center", ctx + " stenosis");
      st.length_mm = io::get_field_or<double>(s, "length", 3.0, ctx + " stenosis");
      st.severity = io::get_field<double>(s, "severity", ctx + " stenosis");
      r.stenoses.push_back(st);
    }
  }
  return r;
}

inline io::json to_json(const Calcification& c) { return {{"center", io::from_vec3(c.center)}, {"radius", c.radius_mm}, {"hu", c.hu}}; }

inline Calcification calcification_from_json(const io::json& j) {
  const std::string ctx = "phantom spec field 'calcifications'";
  Calcification c;
  c.center = io::to_vec3(io::get_field<io::json>(j, "center", ctx), ctx);
  c.radius_mm = io::get_field<double>(j, "radius", ctx);
  c.hu = io::get_field_or<double>(j, "hu", 900.0, ctx);
  return c;
}

inline io::json to_json(const CurveSpec& c) {
  switch (c.type) {
    case CurveType::straight:
      return {{"type", "straight"}, {"start", io::from_vec3(c.start)}, {"end", io::from_vec3(c.end)}};
    case CurveType::helix:
      return {{"type", "helix"}, {"center", io::from_vec3(c.center)}, {"radius", c.helix_radius}, {"pitch", c.pitch}, {"turns", c.turns}};
    case CurveType::spline: {
      io::json pts = io::json::array();
      for (const auto& p : c.control_points) pts.push_back(io::from_vec3(p));
      return {{"type", "spline"}, {"points", pts}};
    }
  }
  return {};
}

inline CurveSpec curve_from_json(const io::json& j) {
  const std::string ctx = "phantom spec field 'curve'";
  CurveSpec c;
  const auto type = io::get_field<std::string>(j, "type", ctx);
  if (type == "straight") {
    c.type = CurveType::straight;
    c.start = io::to_vec3(io::get_field<io::json>(j, "start", ctx), ctx + ".start");
    c.end = io::to_vec3(io::get_field<io::json>(j, "end", ctx), ctx + ".end");
  } else if (type == "helix" || type == "helical") {
    c.type = CurveType::helix;
    c.center = io::to_vec3(io::get_field_or<io::json>(j, "center", io::json::array({0, 0, 0}), ctx), ctx + ".center");
    c.helix_radius = io::get_field<double>(j, "radius", ctx);
    c.pitch = io::get_field<double>(j, "pitch", ctx);
    c.turns = io::get_field_or<double>(j, "turns", 1.0, ctx);
  } else if (type == "spline") {
    c.type = CurveType::spline;
    for (const auto& p : io::get_field<io::json>(j, "points", ctx)) c.control_points.push_back(io::to_vec3(p, ctx + ".points"));
  } else {
    throw ValidationError(ctx + ": unknown type '" + type + "'");
  }
  return c;
}

inline io::json to_json(const PhantomSpec& s) {
  io::json calc = io::json::array();
  for (const auto& c : s.calcifications) calc.push_back(to_json(c));
  return {{"curve", to_json(s.curve)},
          {"radiusProfile", to_json(s.radius)},
          {"lumenHU", s.lumen_hu},
          {"backgroundHU", s.background_hu},
          {"calcifications", calc},
          {"noiseSigmaHU", s.noise_sigma_hu},
          {"blurSigmaMm", s.blur_sigma_mm},
          {"seed", s.seed},
          {"endExtensionMm", s.end_extension_mm}};
}

inline PhantomSpec spec_from_json(const io::json& j) {
  require(j.is_object(), "phantom spec must be a JSON object");
  const std::string ctx = "phantom spec";
  PhantomSpec s;
  s.curve = curve_from_json(io::get_field<io::json>(j, "curve", ctx));
  if (j.contains("radiusProfile")) s.radius = profile_from_json(j.at("radiusProfile"));
  s.lumen_hu = io::get_field_or<double>(j, "lumenHU", s.lumen_hu, ctx);
  s.background_hu = io::get_field_or<double>(j, "backgroundHU", s.background_hu, ctx);
  if (j.contains("calcifications"))
    for (const auto& c : j.at("calcifications")) s.calcifications.push_back(calcification_from_json(c));
  s.noise_sigma_hu = io::get_field_or<double>(j, "noiseSigmaHU", s.noise_sigma_hu, ctx);
  s.blur_sigma_mm = io::get_field_or<double>(j, "blurSigmaMm", s.blur_sigma_mm, ctx);
  s.seed = io::get_field_or<std::uint64_t>(j, "seed", s.seed, ctx);
  s.end_extension_mm = io::get_field_or<double>(j, "endExtensionMm", s.end_extension_mm, ctx);
  validate(s);
  return s;
}

inline io::json to_json(const GroundTruth& gt) {
  io::json calc = io::json::array();
  for (const auto& c : gt.calcifications) calc.push_back(to_json(c));
  return {{"arclength", gt.arclength}, {"radius", gt.radius}, {"profile", to_json(gt.profile)}, {"calcifications", calc}, {"diseased", gt.diseased}};
}

inline GroundTruth truth_from_json(const io::json& j, const std::string& ctx = "ground truth") {
  GroundTruth gt;
  gt.arclength = io::get_field<std::vector<double>>(j, "arclength", ctx);
  gt.radius = io::get_field<std::vector<double>>(j, "radius", ctx);
  require(gt.arclength.size() == gt.radius.size() && gt.radius.size() >= 2, ctx + ": arclength/radius arrays mismatch");
  for (std::size_t i = 1; i < gt.arclength.size(); ++i) require(gt.arclength[i] > gt.arclength[i - 1], ctx + ": arclength must increase");
  for (double r : gt.radius) require(r > 0.0, ctx + ": radii must be > 0");
  if (j.contains("profile")) gt.profile = profile_from_json(j.at("profile"));
  if (j.contains("calcifications"))
    for (const auto& c : j.at("calcifications")) gt.calcifications.push_back(calcification_from_json(c));
  gt.diseased = io::get_field_or<bool>(j, "diseased", false, ctx);
  return gt;
}

}  // namespace phantom_io

/// Reference radius at arbitrary arclengths, linearly interpolated from the
/// per-point table (constant beyond the ends).
inline double interpolate_truth(const GroundTruth& gt, double s) {
  const auto& a = gt.arclength;
  if (s <= a.front()) return gt.radius.front();
  if (s >= a.back()) return gt.radius.back();
  const auto it = std::upper_bound(a.begin(), a.end(), s);
  const std::size_t hi = static_cast<std::size_t>(it - a.begin());
  const double w = (s - a[hi - 1]) / (a[hi] - a[hi - 1]);
  return (1.0 - w) * gt.radius[hi - 1] + w * gt.radius[hi];
}

}  // namespace tubegcn
