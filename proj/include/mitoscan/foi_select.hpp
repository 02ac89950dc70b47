#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mitoscan/io.hpp"
#include "mitoscan/raster.hpp"
#include "mitoscan/tissue_mask.hpp"

namespace mitoscan {

inline constexpr double kTopKMaxOverlap = 0.25;

struct Extent {
  double width_px = 0.0;
  double height_px = 0.0;
};

inline Extent slide_extent(const SlideMeta& s) {
  return {static_cast<double>(s.width_px), static_cast<double>(s.height_px)};
}

inline Extent grid_extent(const DensityGrid& full) {
  return {static_cast<double>(full.cols) * full.downsample, static_cast<double>(full.rows) * full.downsample};
}

struct FoiSelection {
  std::string slide_id;
  std::string selector_id;
  double center_x_px = 0.0;
  double center_y_px = 0.0;
  RectPx rect;
  std::optional<double> score;
};

namespace detail {

struct Candidate {
  float score;
  int row;  // window top-left in the moving-window map
  int col;
};

inline void check_selection_inputs(const DensityGrid& ma, const BinaryMask& valid, int downsample) {
  if (ma.downsample != downsample || valid.grid.downsample != downsample) {
    fail(ErrorCode::GeometryMismatch, "select_foi: downsample differs between map, mask and request");
  }
  implied_kernel(valid.grid, ma);
}

inline std::vector<Candidate> valid_candidates(const DensityGrid& ma, const BinaryMask& valid) {
  const auto k = implied_kernel(valid.grid, ma);
  std::vector<Candidate> out;
  for (int r = 0; r < ma.rows; ++r) {
    for (int c = 0; c < ma.cols; ++c) {
      if (valid.set(r + k.rows / 2, c + k.cols / 2)) out.push_back({ma.at(r, c), r, c});
    }
  }
  return out;
}

// Rect of the FOI centered on the window at (row, col), shifted (never
// resized) so it lies inside the extent.
inline RectPx placed_rect(int row, int col, KernelBins k, int downsample, const FoiShape& shape, Extent extent) {
  auto rect = centered_rect(window_center_x(col, k, downsample), window_center_y(row, k, downsample),
                            static_cast<double>(shape.width_px), static_cast<double>(shape.height_px));
  if (rect.width <= extent.width_px) rect.left = std::clamp(rect.left, 0.0, extent.width_px - rect.width);
  if (rect.height <= extent.height_px) rect.top = std::clamp(rect.top, 0.0, extent.height_px - rect.height);
  return rect;
}

inline FoiSelection make_selection(const DensityGrid& ma, const Candidate& cand, KernelBins k, const FoiShape& shape,
                                   Extent extent) {
  FoiSelection sel;
  sel.slide_id = ma.slide_id;
  sel.rect = placed_rect(cand.row, cand.col, k, ma.downsample, shape, extent);
  sel.center_x_px = sel.rect.center_x();
  sel.center_y_px = sel.rect.center_y();
  sel.score = cand.score;
  return sel;
}

}  // namespace detail

/// Masked argmax of a moving-window map. `ma` is indexed by window top-left,
/// `valid` has full slide-grid geometry and is read at window centers.
/// Ties go to the smallest row, then the smallest column.
inline FoiSelection select_foi(const DensityGrid& ma, const BinaryMask& valid, const FoiShape& shape, int downsample,
                               std::optional<Extent> extent = std::nullopt) {
  detail::check_selection_inputs(ma, valid, downsample);
  const auto k = implied_kernel(valid.grid, ma);
  const auto ext = extent.value_or(grid_extent(valid.grid));
  bool found = false;
  detail::Candidate best{0.0f, 0, 0};
  for (int r = 0; r < ma.rows; ++r) {
    for (int c = 0; c < ma.cols; ++c) {
      if (!valid.set(r + k.rows / 2, c + k.cols / 2)) continue;
      const float v = ma.at(r, c);
      if (!found || v > best.score) {
        best = {v, r, c};
        found = true;
      }
    }
  }
  if (!found) fail(ErrorCode::NoValidRegion, "select_foi: valid mask of slide " + ma.slide_id + " is empty");
  return detail::make_selection(ma, best, k, shape, ext);
}

/// Greedy non-maximum suppression: walk valid centers by decreasing score and
/// keep one unless its rect overlaps an already kept rect by more than 25 %
/// of the FOI area.
inline std::vector<FoiSelection> top_k_foi(const DensityGrid& ma, const BinaryMask& valid, const FoiShape& shape,
                                           int downsample, int k_max, std::optional<Extent> extent = std::nullopt) {
  if (k_max < 1) fail(ErrorCode::InvalidArgument, "top_k_foi: k must be >= 1");
  detail::check_selection_inputs(ma, valid, downsample);
  const auto k = implied_kernel(valid.grid, ma);
  const auto ext = extent.value_or(grid_extent(valid.grid));
  auto cands = detail::valid_candidates(ma, valid);
  if (cands.empty()) fail(ErrorCode::NoValidRegion, "top_k_foi: valid mask of slide " + ma.slide_id + " is empty");
  std::stable_sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.row != b.row) return a.row < b.row;
    return a.col < b.col;
  });
  const double limit = kTopKMaxOverlap * static_cast<double>(shape.width_px) * static_cast<double>(shape.height_px);
  std::vector<FoiSelection> out;
  for (const auto& cand : cands) {
    auto sel = detail::make_selection(ma, cand, k, shape, ext);
    const bool suppressed = std::any_of(out.begin(), out.end(),
                                        [&](const FoiSelection& s) { return overlap_area(s.rect, sel.rect) > limit; });
    if (suppressed) continue;
    out.push_back(std::move(sel));
    if (static_cast<int>(out.size()) == k_max) break;
  }
  return out;
}

// --- FOI list file -----------------------------------------------------------

namespace detail {

inline nlohmann::json pixel_dim(double v) {
  if (v == std::floor(v) && std::abs(v) < 9e15) return static_cast<std::int64_t>(v);
  return v;
}

}  // namespace detail

inline nlohmann::json to_json(const FoiSelection& s) {
  nlohmann::json j = {{"slide_id", s.slide_id},
                      {"selector_id", s.selector_id},
                      {"center_x_px", s.center_x_px},
                      {"center_y_px", s.center_y_px},
                      {"width_px", detail::pixel_dim(s.rect.width)},
                      {"height_px", detail::pixel_dim(s.rect.height)}};
  j["score"] = s.score ? nlohmann::json(*s.score) : nlohmann::json(nullptr);
  return j;
}

inline std::string serialize_foi_list(const std::vector<FoiSelection>& sels) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : sels) arr.push_back(to_json(s));
  return dump_json(arr);
}

inline std::vector<FoiSelection> parse_foi_list(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::MalformedFile, std::string("FOI list: ") + e.what());
  }
  if (!doc.is_array()) fail(ErrorCode::MalformedFile, "FOI list: top level must be an array");
  std::vector<FoiSelection> out;
  std::size_t idx = 0;
  for (const auto& rec : doc) {
    const std::string where = "FOI list record " + std::to_string(idx++);
    if (!rec.is_object()) fail(ErrorCode::MalformedFile, where + ": must be an object");
    auto str = [&](const char* key) {
      const auto it = rec.find(key);
      if (it == rec.end() || !it->is_string()) fail(ErrorCode::InvalidField, where + ": missing string " + key);
      return it->get<std::string>();
    };
    auto num = [&](const char* key) {
      const auto it = rec.find(key);
      if (it == rec.end() || !it->is_number()) fail(ErrorCode::InvalidField, where + ": missing number " + key);
      return it->get<double>();
    };
    FoiSelection s;
    s.slide_id = str("slide_id");
    s.selector_id = str("selector_id");
    s.center_x_px = num("center_x_px");
    s.center_y_px = num("center_y_px");
    const double w = num("width_px");
    const double h = num("height_px");
    if (!(w > 0.0) || !(h > 0.0)) fail(ErrorCode::InvalidField, where + ": rect dims must be positive");
    s.rect = centered_rect(s.center_x_px, s.center_y_px, w, h);
    if (const auto it = rec.find("score"); it != rec.end() && !it->is_null()) {
      if (!it->is_number()) fail(ErrorCode::InvalidField, where + ": score must be a number or null");
      s.score = it->get<double>();
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<FoiSelection> load_foi_list(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::Io, "no such file: " + path.string());
  return parse_foi_list(read_text_file(path));
}

}  // namespace mitoscan
