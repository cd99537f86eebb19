#pragma once

#include "core.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace tubegcn::io {

using nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian and written without byte swapping");

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  require(static_cast<bool>(out), "write failed for " + path.string());
}

inline json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

template <typename T>
void append_binary(std::string& buf, std::span<const T> values) {
  const auto* bytes = reinterpret_cast<const char*>(values.data());
  buf.append(bytes, values.size_bytes());
}

template <typename T>
std::vector<T> parse_binary(std::string_view bytes, std::size_t count) {
  require(bytes.size() >= count * sizeof(T), "binary blob truncated: expected " +
                                                 std::to_string(count * sizeof(T)) + " bytes, got " +
                                                 std::to_string(bytes.size()));
  std::vector<T> out(count);
  std::memcpy(out.data(), bytes.data(), count * sizeof(T));
  return out;
}

/// Fetch a required field, naming it in the error.
template <typename T>
T get_field(const json& j, const std::string& key, const std::string& context) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(context + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(context + ": field '" + key + "' has the wrong type (" + e.what() + ")");
  }
}

template <typename T>
T get_field_or(const json& j, const std::string& key, T fallback, const std::string& context) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get_field<T>(j, key, context);
}

inline Vec3 to_vec3(const json& j, const std::string& context) {
  if (!j.is_array() || j.size() != 3) throw ValidationError(context + ": expected [x, y, z]");
  Vec3 v;
  for (int k = 0; k < 3; ++k) {
    if (!j[k].is_number()) throw ValidationError(context + ": coordinate is not a number");
    v[k] = j[k].get<double>();
  }
  return v;
}

inline json from_vec3(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace tubegcn::io
