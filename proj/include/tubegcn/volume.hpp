#pragma once

#include "core.hpp"
#include "io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <map>
#include <vector>

namespace tubegcn {

/// Scalar CT volume in HU on a regular grid. Voxel (i, j, k) has its center at
/// origin + (i*sx, j*sy, k*sz); storage is x-fastest.
class Volume {
 public:
  Volume() = default;

  Volume(std::array<int, 3> dims, Vec3 spacing, Vec3 origin, std::vector<double> data)
      : dims_(dims), spacing_(spacing), origin_(origin), data_(std::move(data)) {
    for (int a = 0; a < 3; ++a) {
      require(dims_[a] >= 2, "volume dims must all be >= 2");
      require(spacing_[a] > 0.0, "volume spacing must all be > 0");
    }
    require(data_.size() == voxel_count(), "volume data length does not match dims");
  }

  static Volume filled(std::array<int, 3> dims, Vec3 spacing, Vec3 origin, double value) {
    const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    return Volume(dims, spacing, origin, std::vector<double>(n, value));
  }

  const std::array<int, 3>& dims() const { return dims_; }
  const Vec3& spacing() const { return spacing_; }
  const Vec3& origin() const { return origin_; }
  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  std::size_t voxel_count() const { return static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2]; }

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(dims_[0]) * (j + static_cast<std::size_t>(dims_[1]) * k);
  }

  double at(int i, int j, int k) const { return data_[index(i, j, k)]; }
  double& at(int i, int j, int k) { return data_[index(i, j, k)]; }

  Vec3 voxel_center(int i, int j, int k) const {
    return origin_ + Vec3(i * spacing_.x(), j * spacing_.y(), k * spacing_.z());
  }

  /// Physical extent covered by voxel centers.
  Vec3 max_corner() const {
    return origin_ + Vec3((dims_[0] - 1) * spacing_.x(), (dims_[1] - 1) * spacing_.y(), (dims_[2] - 1) * spacing_.z());
  }

  bool contains(const Vec3& p) const {
    const Vec3 hi = max_corner();
    for (int a = 0; a < 3; ++a)
      if (p[a] < origin_[a] || p[a] > hi[a]) return false;
    return true;
  }

 private:
  std::array<int, 3> dims_{0, 0, 0};
  Vec3 spacing_ = Vec3::Ones();
  Vec3 origin_ = Vec3::Zero();
  std::vector<double> data_;
};

/// Trilinear interpolation in physical coordinates; clamp-to-edge outside the grid.
inline double sample_trilinear(const Volume& vol, const Vec3& p) {
  const auto& d = vol.dims();
  int base[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    double u = (p[a] - vol.origin()[a]) / vol.spacing()[a];
    u = std::clamp(u, 0.0, static_cast<double>(d[a] - 1));
    int i0 = static_cast<int>(std::floor(u));
    i0 = std::min(i0, d[a] - 2);
    base[a] = i0;
    frac[a] = u - i0;
  }
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    const double wz = dz ? frac[2] : 1.0 - frac[2];
    for (int dy = 0; dy < 2; ++dy) {
      const double wy = dy ? frac[1] : 1.0 - frac[1];
      for (int dx = 0; dx < 2; ++dx) {
        const double wx = dx ? frac[0] : 1.0 - frac[0];
        acc += wx * wy * wz * vol.at(base[0] + dx, base[1] + dy, base[2] + dz);
      }
    }
  }
  return acc;
}

inline constexpr double kClipLowHU = 0.0;
inline constexpr double kClipHighHU = 1000.0;

/// Clip to [0, 1000] HU and map linearly onto [0, 1].
inline double clip_normalize(double hu) {
  return std::clamp(hu, kClipLowHU, kClipHighHU) / (kClipHighHU - kClipLowHU);
}

// ---------------------------------------------------------------------------
// I/O: raw float32 blob + JSON sidecar, and a metaimage (.mhd/.mha) reader.

namespace volume_io {

inline io::json sidecar(const Volume& vol, const std::string& raw_name) {
  const auto& d = vol.dims();
  return io::json{{"dims", {d[0], d[1], d[2]}},
                  {"spacing", io::from_vec3(vol.spacing())},
                  {"origin", io::from_vec3(vol.origin())},
                  {"dtype", "float32"},
                  {"byteOrder", "little"},
                  {"data", raw_name}};
}

inline std::string to_raw_float32(const Volume& vol) {
  std::vector<float> f(vol.voxel_count());
  std::transform(vol.data().begin(), vol.data().end(), f.begin(), [](double v) { return static_cast<float>(v); });
  std::string buf;
  io::append_binary<float>(buf, f);
  return buf;
}

/// Writes `<stem>.raw` plus the `<stem>.json` sidecar, returns the sidecar path.
inline io::fs::path write(const Volume& vol, const io::fs::path& sidecar_path) {
  io::fs::path raw_path = sidecar_path;
  raw_path.replace_extension(".raw");
  io::write_text(raw_path, to_raw_float32(vol));
  io::write_json(sidecar_path, sidecar(vol, raw_path.filename().string()));
  return sidecar_path;
}

inline Volume read_sidecar(const io::fs::path& sidecar_path) {
  const io::json j = io::read_json(sidecar_path);
  const std::string ctx = sidecar_path.string();
  const auto dims = io::get_field<std::array<int, 3>>(j, "dims", ctx);
  const Vec3 spacing = io::to_vec3(io::get_field<io::json>(j, "spacing", ctx), ctx + " spacing");
  const Vec3 origin = io::to_vec3(io::get_field<io::json>(j, "origin", ctx), ctx + " origin");
  const auto dtype = io::get_field_or<std::string>(j, "dtype", "float32", ctx);
  require(dtype == "float32", ctx + ": only float32 voxel data is supported");
  require(io::get_field_or<std::string>(j, "byteOrder", "little", ctx) == "little", ctx + ": only little-endian data");
  io::fs::path raw = sidecar_path.parent_path() / io::get_field<std::string>(j, "data", ctx);
  for (int a = 0; a < 3; ++a) require(dims[a] >= 2, ctx + ": dims must all be >= 2");
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  const std::string bytes = io::read_text(raw);
  require(bytes.size() == n * sizeof(float), ctx + ": raw file size does not match dims");
  auto f = io::parse_binary<float>(bytes, n);
  return Volume(dims, spacing, origin, std::vector<double>(f.begin(), f.end()));
}

namespace detail {

template <typename T>
std::vector<double> decode_elements(std::string_view bytes, std::size_t n, bool msb) {
  require(bytes.size() >= n * sizeof(T), "metaimage: pixel data truncated");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, bytes.data() + i * sizeof(T), sizeof(T));
    if (msb) std::reverse(raw, raw + sizeof(T));
    T v;
    std::memcpy(&v, raw, sizeof(T));
    out[i] = static_cast<double>(v);
  }
  return out;
}

inline std::vector<double> parse_numbers(const std::string& s) {
  std::vector<double> out;
  std::istringstream ss(s);
  double v;
  while (ss >> v) out.push_back(v);
  return out;
}

}  // namespace detail

/// Minimal metaimage reader: 3D, uncompressed, LOCAL or external data file.
inline Volume read_metaimage(const io::fs::path& header_path) {
  const std::string text = io::read_text(header_path);
  const std::string ctx = header_path.string();
  std::map<std::string, std::string> tags;
  std::size_t pos = 0;
  std::size_t data_offset = std::string::npos;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    tags[key] = trim(line.substr(eq + 1));
    if (key == "ElementDataFile") {
      data_offset = pos;
      break;
    }
  }
  auto tag = [&](const std::string& k) -> const std::string& {
    auto it = tags.find(k);
    if (it == tags.end()) throw ValidationError(ctx + ": missing metaimage tag '" + k + "'");
    return it->second;
  };
  if (tags.count("NDims")) require(tag("NDims") == "3", ctx + ": only 3D metaimages are supported");
  if (tags.count("CompressedData")) require(tag("CompressedData") == "False", ctx + ": compressed data unsupported");
  const auto dim_v = detail::parse_numbers(tag("DimSize"));
  require(dim_v.size() == 3, ctx + ": DimSize needs 3 values");
  std::array<int, 3> dims{static_cast<int>(dim_v[0]), static_cast<int>(dim_v[1]), static_cast<int>(dim_v[2])};
  Vec3 spacing = Vec3::Ones();
  for (const char* k : {"ElementSpacing", "ElementSize"}) {
    if (tags.count(k)) {
      auto s = detail::parse_numbers(tags[k]);
      require(s.size() == 3, ctx + ": spacing needs 3 values");
      spacing = Vec3(s[0], s[1], s[2]);
      break;
    }
  }
  Vec3 origin = Vec3::Zero();
  for (const char* k : {"Offset", "Origin", "Position"}) {
    if (tags.count(k)) {
      auto o = detail::parse_numbers(tags[k]);
      require(o.size() == 3, ctx + ": origin needs 3 values");
      origin = Vec3(o[0], o[1], o[2]);
      break;
    }
  }
  bool msb = false;
  for (const char* k : {"BinaryDataByteOrderMSB", "ElementByteOrderMSB"})
    if (tags.count(k)) msb = tags[k] == "True";

  const std::string& file = tag("ElementDataFile");
  std::string blob;
  if (file == "LOCAL") {
    blob = text.substr(data_offset);
  } else {
    blob = io::read_text(header_path.parent_path() / file);
  }
  for (int a = 0; a < 3; ++a) require(dims[a] >= 2, ctx + ": dims must all be >= 2");
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  const std::string& type = tag("ElementType");
  std::vector<double> data;
  if (type == "MET_FLOAT") data = detail::decode_elements<float>(blob, n, msb);
  else if (type == "MET_DOUBLE") data = detail::decode_elements<double>(blob, n, msb);
  else if (type == "MET_SHORT") data = detail::decode_elements<std::int16_t>(blob, n, msb);
  else if (type == "MET_USHORT") data = detail::decode_elements<std::uint16_t>(blob, n, msb);
  else if (type == "MET_INT") data = detail::decode_elements<std::int32_t>(blob, n, msb);
  else if (type == "MET_UCHAR") data = detail::decode_elements<std::uint8_t>(blob, n, msb);
  else if (type == "MET_CHAR") data = detail::decode_elements<std::int8_t>(blob, n, msb);
  else throw ValidationError(ctx + ": unsupported ElementType " + type);
  return Volume(dims, spacing, origin, std::move(data));
}

/// Dispatch on extension: .mhd/.mha use the metaimage reader, anything else the JSON sidecar.
inline Volume read(const io::fs::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".mhd" || ext == ".mha") return read_metaimage(path);
  return read_sidecar(path);
}

}  // namespace volume_io

}  // namespace tubegcn
