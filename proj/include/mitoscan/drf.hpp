#pragma once

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "mitoscan/io.hpp"
#include "mitoscan/raster.hpp"

// Density-raster format: a JSON sidecar plus a raw little-endian float32
// payload next to it with the extension ".f32".

namespace mitoscan {

inline constexpr int kDrfVersion = 1;

inline std::filesystem::path drf_payload_path(const std::filesystem::path& sidecar) {
  auto p = sidecar;
  p.replace_extension(".f32");
  return p;
}

inline nlohmann::json drf_header(const DensityGrid& g) {
  return {{"drf_version", kDrfVersion}, {"slide_id", g.slide_id}, {"kind", std::string(to_string(g.kind))},
          {"downsample", g.downsample}, {"rows", g.rows},         {"cols", g.cols}};
}

inline std::string encode_f32_le(const std::vector<float>& values) {
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
  }
  return bytes;
}

inline std::vector<float> decode_f32_le(std::string_view bytes) {
  std::vector<float> values(bytes.size() / 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
    values[i] = std::bit_cast<float>(bits);
  }
  return values;
}

inline void write_raster(const DensityGrid& grid, const std::filesystem::path& sidecar) {
  validate_values(grid);
  const auto dir = sidecar.parent_path();
  if (!dir.empty() && !std::filesystem::is_directory(dir)) {
    fail(ErrorCode::Io, "write_raster: directory does not exist: " + dir.string());
  }
  write_file_atomic(drf_payload_path(sidecar), encode_f32_le(grid.values));
  write_file_atomic(sidecar, dump_json(drf_header(grid)));
}

inline DensityGrid read_raster(const std::filesystem::path& sidecar) {
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(read_text_file(sidecar));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::MalformedHeader, sidecar.string() + ": " + e.what());
  }
  if (!h.is_object()) fail(ErrorCode::MalformedHeader, sidecar.string() + ": header must be an object");
  auto get_int = [&](const char* key) -> std::int64_t {
    const auto it = h.find(key);
    if (it == h.end() || !it->is_number_integer()) {
      fail(ErrorCode::MalformedHeader, sidecar.string() + ": missing integer '" + key + "'");
    }
    return it->get<std::int64_t>();
  };
  auto get_str = [&](const char* key) -> std::string {
    const auto it = h.find(key);
    if (it == h.end() || !it->is_string()) {
      fail(ErrorCode::MalformedHeader, sidecar.string() + ": missing string '" + key + "'");
    }
    return it->get<std::string>();
  };
  if (get_int("drf_version") != kDrfVersion) {
    fail(ErrorCode::UnsupportedVersion, sidecar.string() + ": drf_version must be 1");
  }
  DensityGrid g;
  g.slide_id = get_str("slide_id");
  if (!parse_grid_kind(get_str("kind"), g.kind)) fail(ErrorCode::MalformedHeader, sidecar.string() + ": unknown kind");
  const auto ds = get_int("downsample");
  const auto rows = get_int("rows");
  const auto cols = get_int("cols");
  if (ds < 1 || rows < 0 || cols < 0 || rows > (1 << 28) || cols > (1 << 28) || ds > (1 << 30)) {
    fail(ErrorCode::MalformedHeader, sidecar.string() + ": geometry out of range");
  }
  g.downsample = static_cast<int>(ds);
  g.rows = static_cast<int>(rows);
  g.cols = static_cast<int>(cols);

  const auto payload_path = drf_payload_path(sidecar);
  if (!std::filesystem::exists(payload_path)) fail(ErrorCode::Io, "missing payload " + payload_path.string());
  const std::string bytes = read_text_file(payload_path);
  const auto expected = static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols) * 4u;
  if (bytes.size() != expected) {
    fail(ErrorCode::PayloadSizeMismatch, payload_path.string() + ": expected " + std::to_string(expected) +
                                             " bytes, found " + std::to_string(bytes.size()));
  }
  g.values = decode_f32_le(bytes);
  validate_values(g);
  return g;
}

/// Binary PGM (P5, maxval 255): 0 background, 255 set.
inline std::string encode_pgm(const DensityGrid& mask) {
  std::string out = "P5\n" + std::to_string(mask.cols) + " " + std::to_string(mask.rows) + "\n255\n";
  out.reserve(out.size() + mask.size());
  for (float v : mask.values) out.push_back(static_cast<char>(v != 0.0f ? 255 : 0));
  return out;
}

inline void write_pgm(const DensityGrid& mask, const std::filesystem::path& path) {
  write_file_atomic(path, encode_pgm(mask));
}

// Reads a P5 mask; any non-zero byte is set. Geometry metadata is supplied by the caller.
inline DensityGrid read_pgm(const std::filesystem::path& path, const std::string& slide_id, int downsample) {
  const std::string bytes = read_text_file(path);
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (next_token() != "P5") fail(ErrorCode::MalformedHeader, path.string() + ": not a P5 PGM");
  int cols = 0, rows = 0, maxval = 0;
  try {
    cols = std::stoi(next_token());
    rows = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    fail(ErrorCode::MalformedHeader, path.string() + ": bad PGM header");
  }
  if (maxval != 255 || cols < 0 || rows < 0) fail(ErrorCode::MalformedHeader, path.string() + ": unsupported PGM");
  ++pos;  // single whitespace after maxval
  const std::size_t n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  if (bytes.size() < pos || bytes.size() - pos != n) {
    fail(ErrorCode::PayloadSizeMismatch, path.string() + ": PGM payload size mismatch");
  }
  auto g = DensityGrid::zeros(slide_id, downsample, rows, cols, GridKind::Mask);
  for (std::size_t i = 0; i < n; ++i) g.values[i] = bytes[pos + i] != 0 ? 1.0f : 0.0f;
  return g;
}

}  // namespace mitoscan
