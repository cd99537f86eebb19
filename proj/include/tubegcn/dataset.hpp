#pragma once

#include "centerline.hpp"
#include "core.hpp"
#include "io.hpp"
#include "phantom.hpp"
#include "tubemesh.hpp"
#include "volume.hpp"

#include <optional>
#include <string>
#include <vector>

namespace tubegcn {

/// Geometry and ray-sampling settings shared by training and inference.
struct PipelineConfig {
  double resample_mm = 0.5;
  int n_angles = kDefaultAngles;
  int n_samples = kDefaultRaySamples;
  double ray_step_mm = kDefaultRayStepMm;
};

/// One training/evaluation segment: framed centerline, tube graph with
/// features and (when known) per-vertex reference radii.
struct Sample {
  std::string id;
  std::string patient;
  bool diseased = false;
  Centerline centerline;
  TubeGraph graph;
  std::vector<Calcification> calcifications;  // phantom metadata, may be empty
};

inline Centerline prepare_centerline(const Centerline& raw, const PipelineConfig& cfg = {}) {
  return build_frames(resample(raw, cfg.resample_mm));
}

/// Per-vertex reference radii from a per-point truth table keyed by chord arclength.
inline std::vector<double> reference_radii(const Centerline& framed, const GroundTruth& gt, int n_angles) {
  const auto s = framed.arclengths();
  std::vector<double> r;
  r.reserve(s.size() * n_angles);
  for (double si : s) {
    const double ri = interpolate_truth(gt, si);
    for (int a = 0; a < n_angles; ++a) r.push_back(ri);
  }
  return r;
}

inline Sample prepare_sample(std::string id, std::string patient, const Volume& vol, const Centerline& raw,
                             const std::optional<GroundTruth>& truth, const PipelineConfig& cfg = {}) {
  Sample s;
  s.id = std::move(id);
  s.patient = std::move(patient);
  s.centerline = prepare_centerline(raw, cfg);
  s.graph = build_graph(s.centerline, cfg.n_angles);
  extract_features(s.graph, s.centerline, vol, cfg.n_samples, cfg.ray_step_mm);
  if (truth) {
    s.graph.radii = reference_radii(s.centerline, *truth, cfg.n_angles);
    s.diseased = truth->diseased;
    s.calcifications = truth->calcifications;
  }
  return s;
}

inline Sample prepare_sample(std::string id, std::string patient, const Phantom& ph, const PipelineConfig& cfg = {}) {
  return prepare_sample(std::move(id), std::move(patient), ph.volume, ph.centerline, ph.truth, cfg);
}

// ---------------------------------------------------------------------------
// On-disk segment directories: volume.json + volume.raw, centerline.json,
// groundtruth.json (optional for inference).

namespace segment_files {

inline constexpr const char* kVolume = "volume.json";
inline constexpr const char* kVolumeRaw = "volume.raw";
inline constexpr const char* kCenterline = "centerline.json";
inline constexpr const char* kTruth = "groundtruth.json";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kIndex = "dataset.json";

inline bool is_segment_dir(const io::fs::path& dir) {
  return io::fs::exists(dir / kVolume) && io::fs::exists(dir / kCenterline);
}

inline GroundTruth read_truth(const io::fs::path& path) { return phantom_io::truth_from_json(io::read_json(path), path.string()); }

inline Sample load_sample(const io::fs::path& dir, const std::string& id, const std::string& patient, bool need_truth,
                          const PipelineConfig& cfg = {}) {
  const Volume vol = volume_io::read(dir / kVolume);
  const Centerline cl = centerline_io::read(dir / kCenterline);
  std::optional<GroundTruth> gt;
  if (io::fs::exists(dir / kTruth)) gt = read_truth(dir / kTruth);
  require(!need_truth || gt.has_value(), "segment '" + id + "' has no reference radii (" + (dir / kTruth).string() + ")");
  return prepare_sample(id, patient, vol, cl, gt, cfg);
}

/// Writes the volume sidecar and blob, the centerline and the ground truth
/// into `dir`. Returns the four written paths.
inline std::vector<io::fs::path> write_phantom(const io::fs::path& dir, const Phantom& ph) {
  io::fs::create_directories(dir);
  volume_io::write(ph.volume, dir / kVolume);
  centerline_io::write(ph.centerline, dir / kCenterline);
  io::write_json(dir / kTruth, phantom_io::to_json(ph.truth));
  return {dir / kVolume, dir / kVolumeRaw, dir / kCenterline, dir / kTruth};
}

struct IndexEntry {
  std::string id;
  std::string patient;
  std::string dir;
  std::string split;  // "train" | "test" | ""
};

/// Entries from dataset.json, or every segment subdirectory when there is no index.
inline std::vector<IndexEntry> list_segments(const io::fs::path& root) {
  std::vector<IndexEntry> out;
  if (io::fs::exists(root / kIndex)) {
    const auto j = io::read_json(root / kIndex);
    for (const auto& e : io::get_field<io::json>(j, "segments", kIndex)) {
      IndexEntry ie;
      ie.id = io::get_field<std::string>(e, "id", kIndex);
      ie.patient = io::get_field_or<std::string>(e, "patient", ie.id, kIndex);
      ie.dir = io::get_field_or<std::string>(e, "dir", ie.id, kIndex);
      ie.split = io::get_field_or<std::string>(e, "split", "", kIndex);
      out.push_back(ie);
    }
    return out;
  }
  if (is_segment_dir(root)) return {IndexEntry{root.filename().string(), root.filename().string(), ".", ""}};
  std::vector<io::fs::path> dirs;
  for (const auto& d : io::fs::directory_iterator(root))
    if (d.is_directory() && is_segment_dir(d.path())) dirs.push_back(d.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) out.push_back({d.filename().string(), d.filename().string(), d.filename().string(), ""});
  return out;
}

}  // namespace segment_files

// ---------------------------------------------------------------------------
// Randomized phantoms

struct RandomPhantomOptions {
  double min_radius_mm = 1.0;
  double max_radius_mm = 2.5;
  double min_length_mm = 14.0;
  double max_length_mm = 20.0;
  double stenosis_probability = 0.5;
  double calcification_probability = 0.5;
  double noise_sigma_hu = 20.0;
  double blur_sigma_mm = 0.3;
  double lumen_hu = 400.0;
  double background_hu = 50.0;
  double calcification_hu = 900.0;
  bool force_calcification = false;
};

namespace detail {

inline Vec3 random_unit(Rng& rng) {
  while (true) {
    Vec3 v(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const double n = v.norm();
    if (n > 0.1 && n <= 1.0) return v / n;
  }
}

inline Vec3 perturb_direction(const Vec3& d, double max_angle, Rng& rng) {
  Vec3 axis = d.cross(random_unit(rng));
  if (axis.norm() < 1e-6) return d;
  axis.normalize();
  return Eigen::AngleAxisd(rng.uniform(-max_angle, max_angle), axis) * d;
}

}  // namespace detail

/// A smooth random vessel: straight, helical or spline curve, slightly
/// tapered radius, optional narrowing and optional calcifications placed
/// just outside the lumen.
inline PhantomSpec random_phantom_spec(std::uint64_t seed, const RandomPhantomOptions& opt = {}) {
  Rng rng(seed);
  PhantomSpec s;
  s.seed = mix_seed(seed, 77);
  s.noise_sigma_hu = opt.noise_sigma_hu;
  s.blur_sigma_mm = opt.blur_sigma_mm;
  s.lumen_hu = opt.lumen_hu;
  s.background_hu = opt.background_hu;

  const double length = rng.uniform(opt.min_length_mm, opt.max_length_mm);
  const double kind = rng.uniform();
  if (kind < 0.2) {
    s.curve.type = CurveType::straight;
    s.curve.start = Vec3::Zero();
    s.curve.end = length * detail::random_unit(rng);
  } else if (kind < 0.4) {
    s.curve.type = CurveType::helix;
    s.curve.helix_radius = rng.uniform(6.0, 10.0);
    s.curve.pitch = rng.uniform(25.0, 40.0);
    const double per_turn = std::hypot(2.0 * kPi * s.curve.helix_radius, s.curve.pitch);
    s.curve.turns = length / per_turn;
  } else {
    s.curve.type = CurveType::spline;
    constexpr int kSegments = 4;
    Vec3 p = Vec3::Zero();
    Vec3 d = detail::random_unit(rng);
    s.curve.control_points.push_back(p);
    for (int k = 0; k < kSegments; ++k) {
      d = detail::perturb_direction(d, 25.0 * kPi / 180.0, rng);
      p += (length / kSegments) * d;
      s.curve.control_points.push_back(p);
    }
  }

  const auto visible = detail::dense_curve(s.curve);
  double arc = 0.0;
  for (std::size_t i = 1; i < visible.size(); ++i) arc += (visible[i] - visible[i - 1]).norm();
  const double r0 = rng.uniform(opt.min_radius_mm, opt.max_radius_mm);
  const double r1 = rng.uniform(std::max(opt.min_radius_mm, 0.85 * r0), r0);
  s.radius.nominal_mm = r0;
  s.radius.knots = {{0.0, r0}, {arc, r1}};
  if (rng.uniform() < opt.stenosis_probability) {
    Stenosis st;
    st.center_mm = rng.uniform(0.3, 0.7) * arc;
    st.length_mm = rng.uniform(3.0, 6.0);
    st.severity = rng.uniform(0.2, 0.6);
    s.radius.stenoses.push_back(st);
  }

  if (opt.force_calcification || rng.uniform() < opt.calcification_probability) {
    Centerline dense;
    dense.points = visible;
    const Centerline cl = build_frames(resample(dense, 0.5));
    const auto sl = cl.arclengths();
    const int count = 1 + static_cast<int>(rng.index(2));
    for (int c = 0; c < count; ++c) {
      const std::size_t i = std::min(cl.size() - 1, static_cast<std::size_t>(rng.uniform(0.2, 0.8) * (cl.size() - 1)));
      const double phi = rng.uniform(0.0, 2.0 * kPi);
      Calcification calc;
      calc.radius_mm = rng.uniform(0.5, 1.0);
      calc.hu = opt.calcification_hu;
      const double gap = rng.uniform(0.0, 0.2);
      // Keep the sphere clear of the lumen over its whole axial extent.
      double r_local = 0.0;
      for (std::size_t k = 0; k < cl.size(); ++k)
        if (std::abs(sl[k] - sl[i]) <= calc.radius_mm + 0.5) r_local = std::max(r_local, s.radius.at(sl[k]));
      calc.center = cl.points[i] + (r_local + gap + calc.radius_mm) * ray_direction(cl.frames[i], phi);
      s.calcifications.push_back(calc);
    }
  }
  validate(s);
  return s;
}

}  // namespace tubegcn
