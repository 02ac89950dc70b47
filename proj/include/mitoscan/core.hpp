#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "mitoscan/error.hpp"

namespace mitoscan {

inline constexpr double kDefaultMpp = 0.25;
inline constexpr double kTenHpfAreaMm2 = 2.37;
inline constexpr int kDefaultAspectW = 4;
inline constexpr int kDefaultAspectH = 3;

struct SlideMeta {
  std::string slide_id;
  std::int64_t width_px = 0;
  std::int64_t height_px = 0;
  double mpp = kDefaultMpp;

  double px_to_mm(double px) const { return px * mpp * 1e-3; }
  double area_mm2() const {
    return px_to_mm(static_cast<double>(width_px)) * px_to_mm(static_cast<double>(height_px));
  }
};

inline void validate(const SlideMeta& meta) {
  if (meta.slide_id.empty()) {
    fail(ErrorCode::InvalidField, "slide_id=<empty> field=slide_id: must be non-empty");
  }
  if (meta.width_px < 1) {
    fail(ErrorCode::InvalidField, "slide_id=" + meta.slide_id + " field=width_px: must be >= 1");
  }
  if (meta.height_px < 1) {
    fail(ErrorCode::InvalidField, "slide_id=" + meta.slide_id + " field=height_px: must be >= 1");
  }
  if (!std::isfinite(meta.mpp) || meta.mpp <= 0.0) {
    fail(ErrorCode::InvalidField, "slide_id=" + meta.slide_id + " field=mpp: must be finite and > 0");
  }
}

enum class Label : std::uint8_t { Mitosis = 0, HardNegative = 1 };

enum class LabelFilter { Mitosis, HardNegative, Any };

constexpr std::string_view to_string(Label label) {
  return label == Label::Mitosis ? "mitosis" : "hard_negative";
}

constexpr bool matches(LabelFilter filter, Label label) {
  switch (filter) {
    case LabelFilter::Mitosis: return label == Label::Mitosis;
    case LabelFilter::HardNegative: return label == Label::HardNegative;
    case LabelFilter::Any: return true;
  }
  return false;
}

struct Annotation {
  double x_px = 0.0;
  double y_px = 0.0;
  Label label = Label::Mitosis;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

// Canonical order: y, then x, then label.
inline bool canonical_less(const Annotation& a, const Annotation& b) {
  return std::tie(a.y_px, a.x_px, a.label) < std::tie(b.y_px, b.x_px, b.label);
}

struct AnnotationSet {
  SlideMeta slide;
  std::vector<Annotation> annotations;

  void canonicalize() { std::stable_sort(annotations.begin(), annotations.end(), canonical_less); }

  std::size_t count(LabelFilter filter) const {
    return static_cast<std::size_t>(std::count_if(
        annotations.begin(), annotations.end(), [filter](const Annotation& a) { return matches(filter, a.label); }));
  }

  bool contains(double x, double y) const {
    return x >= 0.0 && y >= 0.0 && x < static_cast<double>(slide.width_px) &&
           y < static_cast<double>(slide.height_px);
  }
};

// Axis-aligned rectangle in full-resolution pixels, half-open [left, left+width) x [top, top+height).
struct RectPx {
  double left = 0.0;
  double top = 0.0;
  double width = 0.0;
  double height = 0.0;

  double right() const { return left + width; }
  double bottom() const { return top + height; }
  double center_x() const { return left + width / 2.0; }
  double center_y() const { return top + height / 2.0; }
  double area() const { return width * height; }

  bool contains(double x, double y) const { return x >= left && x < right() && y >= top && y < bottom(); }

  bool inside(double extent_w, double extent_h) const {
    return left >= 0.0 && top >= 0.0 && right() <= extent_w && bottom() <= extent_h;
  }

  friend bool operator==(const RectPx&, const RectPx&) = default;
};

inline RectPx centered_rect(double cx, double cy, double width, double height) {
  return RectPx{cx - width / 2.0, cy - height / 2.0, width, height};
}

inline double overlap_area(const RectPx& a, const RectPx& b) {
  const double w = std::min(a.right(), b.right()) - std::max(a.left, b.left);
  const double h = std::min(a.bottom(), b.bottom()) - std::max(a.top, b.top);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

// Euclidean distance from a point to the boundary (perimeter) of a rectangle.
inline double distance_to_boundary(const RectPx& r, double x, double y) {
  const bool inside = x >= r.left && x <= r.right() && y >= r.top && y <= r.bottom();
  if (inside) {
    return std::min({x - r.left, r.right() - x, y - r.top, r.bottom() - y});
  }
  const double dx = std::max({r.left - x, 0.0, x - r.right()});
  const double dy = std::max({r.top - y, 0.0, y - r.bottom()});
  return std::hypot(dx, dy);
}

/// Field-of-interest rectangle geometry. Physical size comes from area and
/// aspect; pixel size is derived for one scan resolution.
struct FoiShape {
  double area_mm2 = kTenHpfAreaMm2;
  int aspect_w = kDefaultAspectW;
  int aspect_h = kDefaultAspectH;
  double mpp = kDefaultMpp;
  std::int64_t width_px = 0;
  std::int64_t height_px = 0;

  double pixel_area_mm2() const {
    const double s = mpp * 1e-3;
    return static_cast<double>(width_px) * static_cast<double>(height_px) * s * s;
  }
};

inline FoiShape foi_shape(double area_mm2, int aspect_w, int aspect_h, double mpp) {
  if (!(area_mm2 > 0.0) || !std::isfinite(area_mm2) || aspect_w <= 0 || aspect_h <= 0 || !(mpp > 0.0) ||
      !std::isfinite(mpp)) {
    fail(ErrorCode::InvalidArgument, "foi_shape: all inputs must be positive");
  }
  const double width_mm = std::sqrt(area_mm2 * aspect_w / aspect_h);
  const double height_mm = std::sqrt(area_mm2 * aspect_h / aspect_w);
  FoiShape shape;
  shape.area_mm2 = area_mm2;
  shape.aspect_w = aspect_w;
  shape.aspect_h = aspect_h;
  shape.mpp = mpp;
  // std::round rounds half away from zero.
  shape.width_px = static_cast<std::int64_t>(std::round(width_mm * 1000.0 / mpp));
  shape.height_px = static_cast<std::int64_t>(std::round(height_mm * 1000.0 / mpp));
  if (shape.width_px < 1 || shape.height_px < 1) {
    fail(ErrorCode::InvalidArgument, "foi_shape: window is smaller than one pixel");
  }
  return shape;
}

inline FoiShape default_foi_shape(double mpp = kDefaultMpp) {
  return foi_shape(kTenHpfAreaMm2, kDefaultAspectW, kDefaultAspectH, mpp);
}

// --- grading -------------------------------------------------------------

enum class SchemeName { Kiupel, ElstonEllis };

constexpr std::string_view to_string(SchemeName name) {
  return name == SchemeName::Kiupel ? "Kiupel" : "ElstonEllis";
}

struct GradeBand {
  std::int64_t min_mc;  // inclusive lower edge
  std::string label;
};

struct GradingScheme {
  SchemeName name = SchemeName::Kiupel;
  std::vector<GradeBand> bands;  // first band starts at 0, edges strictly increasing
};

inline GradingScheme kiupel_scheme() {
  return {SchemeName::Kiupel, {{0, "LowGrade"}, {7, "HighGrade"}}};
}

// MC = 20 is assigned to High.
inline GradingScheme elston_ellis_scheme() {
  return {SchemeName::ElstonEllis, {{0, "Low"}, {10, "Moderate"}, {20, "High"}}};
}

inline GradingScheme scheme_by_name(SchemeName name) {
  return name == SchemeName::Kiupel ? kiupel_scheme() : elston_ellis_scheme();
}

inline const std::string& grade(std::int64_t mc, const GradingScheme& scheme) {
  if (scheme.bands.empty() || scheme.bands.front().min_mc != 0) {
    fail(ErrorCode::InvalidArgument, "grading scheme must start at MC 0");
  }
  std::size_t idx = 0;
  for (std::size_t i = 1; i < scheme.bands.size(); ++i) {
    if (mc >= scheme.bands[i].min_mc) idx = i;
  }
  return scheme.bands[idx].label;
}

inline std::size_t grade_index(std::int64_t mc, const GradingScheme& scheme) {
  std::size_t idx = 0;
  for (std::size_t i = 1; i < scheme.bands.size(); ++i) {
    if (mc >= scheme.bands[i].min_mc) idx = i;
  }
  return idx;
}

}  // namespace mitoscan
