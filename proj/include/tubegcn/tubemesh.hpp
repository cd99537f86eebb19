#pragma once

#include "centerline.hpp"
#include "core.hpp"
#include "io.hpp"
#include "volume.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <optional>
#include <sstream>
#include <vector>

namespace tubegcn {

using Adjacency = std::vector<std::vector<int>>;
using Triangle = std::array<int, 3>;

inline constexpr int kDefaultAngles = 24;
inline constexpr int kDefaultRaySamples = 32;
inline constexpr double kDefaultRayStepMm = 0.1;

/// Fixed-topology tube graph. Vertex (plane i, angle slot a) has index
/// i * n_angles + a and angle phi = 2*pi*a / n_angles.
struct TubeGraph {
  int n_planes = 0;
  int n_angles = 0;
  Adjacency neighbors;             // ring and rail edges only; no self loops
  std::vector<Triangle> triangles;  // rendering faces, outward winding
  std::vector<double> radii;        // per vertex, empty until populated
  Matrix features;                  // n_vertices x F, empty until extracted

  int vertex_count() const { return n_planes * n_angles; }
  int vertex(int plane, int angle) const { return plane * n_angles + angle; }
  int plane_of(int v) const { return v / n_angles; }
  int angle_slot(int v) const { return v % n_angles; }
  double angle(int v) const { return 2.0 * kPi * angle_slot(v) / n_angles; }
  bool has_radii() const { return static_cast<int>(radii.size()) == vertex_count(); }
  bool has_features() const { return features.rows() == vertex_count() && features.cols() > 0; }

  /// Number of undirected GCN edges.
  std::size_t edge_count() const {
    std::size_t twice = 0;
    for (const auto& n : neighbors) twice += n.size();
    return twice / 2;
  }
};

/// Ring edges (i,a)-(i,a+-1) and rail edges (i,a)-(i+-1,a); each quad
/// {(i,a),(i,a+1),(i+1,a+1),(i+1,a)} is split along (i,a)-(i+1,a+1).
inline TubeGraph build_topology(int n_planes, int n_angles) {
  require(n_angles >= 3, "tube graph needs at least 3 angles");
  require(n_planes >= 2, "tube graph needs at least 2 planes");
  TubeGraph g;
  g.n_planes = n_planes;
  g.n_angles = n_angles;
  g.neighbors.resize(static_cast<std::size_t>(n_planes) * n_angles);
  for (int i = 0; i < n_planes; ++i) {
    for (int a = 0; a < n_angles; ++a) {
      auto& nb = g.neighbors[g.vertex(i, a)];
      nb.push_back(g.vertex(i, (a + n_angles - 1) % n_angles));
      nb.push_back(g.vertex(i, (a + 1) % n_angles));
      if (i > 0) nb.push_back(g.vertex(i - 1, a));
      if (i + 1 < n_planes) nb.push_back(g.vertex(i + 1, a));
    }
  }
  g.triangles.reserve(2 * static_cast<std::size_t>(n_angles) * (n_planes - 1));
  for (int i = 0; i + 1 < n_planes; ++i) {
    for (int a = 0; a < n_angles; ++a) {
      const int a1 = (a + 1) % n_angles;
      const int v00 = g.vertex(i, a), v01 = g.vertex(i, a1);
      const int v10 = g.vertex(i + 1, a), v11 = g.vertex(i + 1, a1);
      g.triangles.push_back({v00, v01, v11});
      g.triangles.push_back({v00, v11, v10});
    }
  }
  return g;
}

inline TubeGraph build_graph(const Centerline& cl, int n_angles = kDefaultAngles) {
  require(cl.framed(), "build_graph needs a framed centerline");
  return build_topology(static_cast<int>(cl.size()), n_angles);
}

inline Vec3 ray_direction(const Frame& f, double phi) { return std::cos(phi) * f.normal + std::sin(phi) * f.binormal; }

/// x_v[k] = clip_normalize(vol(c_i + k * step * d_v)), k = 0..n_samples-1.
inline void extract_features(TubeGraph& g, const Centerline& cl, const Volume& vol,
                             int n_samples = kDefaultRaySamples, double step_mm = kDefaultRayStepMm) {
  require(n_samples >= 1, "need at least one ray sample");
  require(step_mm > 0.0, "ray step must be > 0");
  require(cl.framed() && static_cast<int>(cl.size()) == g.n_planes, "centerline does not match graph planes");
  g.features.resize(g.vertex_count(), n_samples);
  for (int v = 0; v < g.vertex_count(); ++v) {
    const int i = g.plane_of(v);
    const Vec3 d = ray_direction(cl.frames[i], g.angle(v));
    for (int k = 0; k < n_samples; ++k)
      g.features(v, k) = clip_normalize(sample_trilinear(vol, cl.points[i] + (k * step_mm) * d));
  }
}

inline std::vector<Vec3> realize_positions(const TubeGraph& g, const Centerline& cl) {
  require(g.has_radii(), "radii are not populated");
  require(cl.framed() && static_cast<int>(cl.size()) == g.n_planes, "centerline does not match graph planes");
  std::vector<Vec3> pos(g.vertex_count());
  for (int v = 0; v < g.vertex_count(); ++v) {
    require(g.radii[v] > 0.0 && std::isfinite(g.radii[v]), "radius must be positive at vertex " + std::to_string(v));
    const int i = g.plane_of(v);
    pos[v] = cl.points[i] + g.radii[v] * ray_direction(cl.frames[i], g.angle(v));
  }
  return pos;
}

// ---------------------------------------------------------------------------
// Wavefront OBJ

struct Mesh {
  std::vector<Vec3> positions;
  std::vector<Triangle> triangles;
};

inline std::string export_obj(const TubeGraph& g, const std::vector<Vec3>& positions) {
  require(static_cast<int>(positions.size()) == g.vertex_count(), "position count does not match graph");
  std::string out;
  out.reserve(positions.size() * 40 + g.triangles.size() * 24);
  char line[128];
  for (const auto& p : positions) {
    const int n = std::snprintf(line, sizeof line, "v %.9g %.9g %.9g\n", p.x(), p.y(), p.z());
    out.append(line, static_cast<std::size_t>(n));
  }
  for (const auto& t : g.triangles) {
    const int n = std::snprintf(line, sizeof line, "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
    out.append(line, static_cast<std::size_t>(n));
  }
  return out;
}

/// Reads `v` and `f` records; polygon faces are fan-triangulated, texture and
/// normal indices (a/b/c) are ignored.
inline Mesh parse_obj(std::string_view text) {
  Mesh m;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      double x, y, z;
      require(static_cast<bool>(ls >> x >> y >> z), "OBJ line " + std::to_string(line_no) + ": bad vertex");
      m.positions.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const int k = std::stoi(tok.substr(0, tok.find('/')));
        idx.push_back(k > 0 ? k - 1 : static_cast<int>(m.positions.size()) + k);
      }
      require(idx.size() >= 3, "OBJ line " + std::to_string(line_no) + ": face with fewer than 3 vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) m.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  for (const auto& t : m.triangles)
    for (int v : t) require(v >= 0 && v < static_cast<int>(m.positions.size()), "OBJ face index out of range");
  return m;
}

// ---------------------------------------------------------------------------
// Graph cache: JSON header + little-endian float64 blob (features then radii).

namespace graph_io {

inline void write(const TubeGraph& g, const io::fs::path& json_path) {
  io::fs::path blob_path = json_path;
  blob_path.replace_extension(".bin");
  std::string blob;
  io::append_binary<double>(blob, std::span<const double>(g.features.data(), static_cast<std::size_t>(g.features.size())));
  io::append_binary<double>(blob, g.radii);
  io::write_text(blob_path, blob);
  io::write_json(json_path, io::json{{"nPlanes", g.n_planes},
                                     {"nAngles", g.n_angles},
                                     {"nFeatures", g.features.cols()},
                                     {"hasFeatures", g.has_features()},
                                     {"hasRadii", g.has_radii()},
                                     {"dtype", "float64"},
                                     {"byteOrder", "little"},
                                     {"layout", "features row-major [vertex][feature], then radii [vertex]"},
                                     {"data", blob_path.filename().string()}});
}

inline TubeGraph read(const io::fs::path& json_path) {
  const io::json j = io::read_json(json_path);
  const std::string ctx = json_path.string();
  TubeGraph g = build_topology(io::get_field<int>(j, "nPlanes", ctx), io::get_field<int>(j, "nAngles", ctx));
  const bool has_f = io::get_field<bool>(j, "hasFeatures", ctx);
  const bool has_r = io::get_field<bool>(j, "hasRadii", ctx);
  const auto nf = has_f ? io::get_field<std::size_t>(j, "nFeatures", ctx) : 0;
  const std::size_t nv = static_cast<std::size_t>(g.vertex_count());
  const std::string bytes = io::read_text(json_path.parent_path() / io::get_field<std::string>(j, "data", ctx));
  const std::size_t count = nv * nf + (has_r ? nv : 0);
  require(bytes.size() == count * sizeof(double), ctx + ": blob size does not match header");
  auto values = io::parse_binary<double>(bytes, count);
  if (has_f) {
    g.features = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(nv), static_cast<Eigen::Index>(nf));
  }
  if (has_r) g.radii.assign(values.begin() + static_cast<std::ptrdiff_t>(nv * nf), values.end());
  return g;
}

}  // namespace graph_io

}  // namespace tubegcn
