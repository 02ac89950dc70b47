#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "mitoscan/core.hpp"

namespace mitoscan {

using SlideRegistry = std::map<std::string, SlideMeta>;

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes via a sibling temp file and rename, so readers never see partial output.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::Io, "short write on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorCode::Io, "cannot rename onto " + path.string());
  }
}

inline std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

// --- slide metadata --------------------------------------------------------

inline nlohmann::json to_json(const SlideMeta& m) {
  return {{"slide_id", m.slide_id}, {"width_px", m.width_px}, {"height_px", m.height_px}, {"mpp", m.mpp}};
}

inline std::vector<SlideMeta> parse_slide_meta(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::MalformedFile, std::string("slide meta: ") + e.what());
  }
  if (!doc.is_array()) fail(ErrorCode::MalformedFile, "slide meta: top level must be an array");

  std::vector<SlideMeta> out;
  SlideRegistry seen;
  for (const auto& rec : doc) {
    if (!rec.is_object()) fail(ErrorCode::MalformedFile, "slide meta: records must be objects");
    SlideMeta m;
    const auto id_it = rec.find("slide_id");
    if (id_it == rec.end() || !id_it->is_string()) {
      fail(ErrorCode::InvalidField, "slide_id=<missing> field=slide_id");
    }
    m.slide_id = id_it->get<std::string>();
    auto int_field = [&](const char* name) -> std::int64_t {
      const auto it = rec.find(name);
      if (it == rec.end() || !it->is_number_integer()) {
        fail(ErrorCode::InvalidField, "slide_id=" + m.slide_id + " field=" + name + ": integer required");
      }
      return it->get<std::int64_t>();
    };
    m.width_px = int_field("width_px");
    m.height_px = int_field("height_px");
    if (const auto it = rec.find("mpp"); it != rec.end()) {
      if (!it->is_number()) fail(ErrorCode::InvalidField, "slide_id=" + m.slide_id + " field=mpp: number required");
      m.mpp = it->get<double>();
    }
    validate(m);
    if (!seen.emplace(m.slide_id, m).second) {
      fail(ErrorCode::DuplicateSlide, "slide_id=" + m.slide_id + " appears more than once");
    }
    out.push_back(std::move(m));
  }
  return out;
}

inline std::vector<SlideMeta> load_slide_meta(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::Io, "no such file: " + path.string());
  return parse_slide_meta(read_text_file(path));
}

inline SlideRegistry make_registry(const std::vector<SlideMeta>& metas) {
  SlideRegistry reg;
  for (const auto& m : metas) {
    if (!reg.emplace(m.slide_id, m).second) {
      fail(ErrorCode::DuplicateSlide, "slide_id=" + m.slide_id + " appears more than once");
    }
  }
  return reg;
}

inline std::string serialize_slide_meta(const std::vector<SlideMeta>& metas) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& m : metas) arr.push_back(to_json(m));
  return dump_json(arr);
}

// --- annotations -----------------------------------------------------------

inline constexpr std::string_view kAnnotationHeader = "slide_id,x_px,y_px,label";

// Two fractional digits, the on-disk precision of annotation coordinates.
inline std::string format_coord(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

// Shortest round-trip decimal form.
inline std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// The value a coordinate takes after a write/read cycle.
inline double quantize_coord(double v) {
  double out = 0.0;
  parse_double(format_coord(v), out);
  return out;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

inline Label parse_label(std::string_view s, std::size_t row) {
  if (s == "mitosis") return Label::Mitosis;
  if (s == "hard_negative") return Label::HardNegative;
  fail(ErrorCode::UnknownLabel, "row " + std::to_string(row) + ": unknown label '" + std::string(s) + "'");
}

using AnnotationMap = std::map<std::string, AnnotationSet>;

/// Parses the annotation CSV. Row numbers in errors are 1-based file lines
/// (the header is line 1). Every registry slide gets an entry, possibly empty.
inline AnnotationMap parse_annotations(std::string_view text, const SlideRegistry& registry) {
  AnnotationMap out;
  for (const auto& [id, meta] : registry) out[id].slide = meta;

  std::size_t row = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++row;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header_seen) {
      if (line != kAnnotationHeader) {
        fail(ErrorCode::MalformedRow, "row 1: expected header '" + std::string(kAnnotationHeader) + "'");
      }
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 4) {
      fail(ErrorCode::MalformedRow, "row " + std::to_string(row) + ": expected 4 fields");
    }
    const std::string slide_id(fields[0]);
    const auto it = registry.find(slide_id);
    if (it == registry.end()) {
      fail(ErrorCode::UnknownSlide, "row " + std::to_string(row) + ": unknown slide_id=" + slide_id);
    }
    Annotation a;
    if (!parse_double(fields[1], a.x_px) || !parse_double(fields[2], a.y_px)) {
      fail(ErrorCode::MalformedRow, "row " + std::to_string(row) + ": bad coordinate");
    }
    a.label = parse_label(fields[3], row);
    auto& set = out[slide_id];
    if (!set.contains(a.x_px, a.y_px)) {
      fail(ErrorCode::OutOfBounds, "row " + std::to_string(row) + ": point outside slide_id=" + slide_id);
    }
    set.annotations.push_back(a);
  }
  if (!header_seen) fail(ErrorCode::MalformedRow, "row 1: missing header");
  for (auto& [id, set] : out) set.canonicalize();
  return out;
}

inline AnnotationMap load_annotations(const std::filesystem::path& path, const SlideRegistry& registry) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::Io, "no such file: " + path.string());
  return parse_annotations(read_text_file(path), registry);
}

inline std::string serialize_annotations(const AnnotationSet& set) {
  std::vector<Annotation> sorted = set.annotations;
  std::stable_sort(sorted.begin(), sorted.end(), canonical_less);
  std::string out(kAnnotationHeader);
  out += '\n';
  for (const auto& a : sorted) {
    out += set.slide.slide_id;
    out += ',';
    out += format_coord(a.x_px);
    out += ',';
    out += format_coord(a.y_px);
    out += ',';
    out += to_string(a.label);
    out += '\n';
  }
  return out;
}

}  // namespace mitoscan
