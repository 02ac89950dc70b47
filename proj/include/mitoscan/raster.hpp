#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "mitoscan/core.hpp"

namespace mitoscan {

inline constexpr int kDefaultDownsample = 128;

enum class GridKind { BinCount, DiscMap, MaMap, Mask, Estimate };

constexpr std::string_view to_string(GridKind kind) {
  switch (kind) {
    case GridKind::BinCount: return "BinCount";
    case GridKind::DiscMap: return "DiscMap";
    case GridKind::MaMap: return "MaMap";
    case GridKind::Mask: return "Mask";
    case GridKind::Estimate: return "Estimate";
  }
  return "Unknown";
}

inline bool parse_grid_kind(std::string_view s, GridKind& out) {
  for (auto k : {GridKind::BinCount, GridKind::DiscMap, GridKind::MaMap, GridKind::Mask, GridKind::Estimate}) {
    if (s == to_string(k)) {
      out = k;
      return true;
    }
  }
  return false;
}

/// Row-major float raster over a slide. Bin (r, c) covers full-resolution
/// pixels [c*D, (c+1)*D) x [r*D, (r+1)*D). Moving-window outputs (MaMap) are
/// smaller than the slide grid and are indexed by window top-left.
struct DensityGrid {
  std::string slide_id;
  int downsample = 1;
  int rows = 0;
  int cols = 0;
  GridKind kind = GridKind::BinCount;
  std::vector<float> values;

  static DensityGrid zeros(std::string slide_id, int downsample, int rows, int cols, GridKind kind) {
    DensityGrid g;
    g.slide_id = std::move(slide_id);
    g.downsample = downsample;
    g.rows = rows;
    g.cols = cols;
    g.kind = kind;
    g.values.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0.0f);
    return g;
  }

  std::size_t size() const { return values.size(); }
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c);
  }
  float at(int r, int c) const { return values[index(r, c)]; }
  float& at(int r, int c) { return values[index(r, c)]; }

  bool same_geometry(const DensityGrid& o) const {
    return rows == o.rows && cols == o.cols && downsample == o.downsample;
  }

  double sum() const {
    double s = 0.0;
    for (float v : values) s += v;
    return s;
  }
};

inline int ceil_div(std::int64_t a, std::int64_t b) { return static_cast<int>((a + b - 1) / b); }

inline void check_downsample(int downsample) {
  if (downsample < 1) fail(ErrorCode::InvalidArgument, "downsample must be >= 1");
}

inline DensityGrid slide_grid(const SlideMeta& slide, int downsample, GridKind kind) {
  check_downsample(downsample);
  return DensityGrid::zeros(slide.slide_id, downsample, ceil_div(slide.height_px, downsample),
                            ceil_div(slide.width_px, downsample), kind);
}

/// Checks the value invariants of a grid's kind.
inline void validate_values(const DensityGrid& g) {
  if (g.values.size() != static_cast<std::size_t>(g.rows) * static_cast<std::size_t>(g.cols)) {
    fail(ErrorCode::PayloadSizeMismatch, "grid " + g.slide_id + ": value count does not match rows*cols");
  }
  for (float v : g.values) {
    if (!std::isfinite(v)) fail(ErrorCode::InvalidField, "grid " + g.slide_id + ": non-finite value");
    if (g.kind == GridKind::Mask && v != 0.0f && v != 1.0f) {
      fail(ErrorCode::InvalidField, "grid " + g.slide_id + " kind Mask: value not in {0,1}");
    }
    if (g.kind == GridKind::BinCount && (v < 0.0f || v != std::floor(v))) {
      fail(ErrorCode::InvalidField, "grid " + g.slide_id + " kind BinCount: value not a non-negative integer");
    }
  }
}

// --- point rasterization ---------------------------------------------------

inline DensityGrid bin_points(const AnnotationSet& set, LabelFilter filter, int downsample) {
  auto grid = slide_grid(set.slide, downsample, GridKind::BinCount);
  for (const auto& a : set.annotations) {
    if (!matches(filter, a.label)) continue;
    const int c = static_cast<int>(std::floor(a.x_px / downsample));
    const int r = static_cast<int>(std::floor(a.y_px / downsample));
    if (r < 0 || c < 0 || r >= grid.rows || c >= grid.cols) {
      fail(ErrorCode::OutOfBounds, "bin_points: annotation outside slide " + set.slide.slide_id);
    }
    grid.at(r, c) += 1.0f;
  }
  return grid;
}

/// Bin is set when its center (full-resolution) lies within diameter/2 of a point.
inline DensityGrid rasterize_discs(const AnnotationSet& set, LabelFilter filter, double diameter_px, int downsample) {
  if (!(diameter_px > 0.0)) fail(ErrorCode::InvalidArgument, "rasterize_discs: diameter must be > 0");
  auto grid = slide_grid(set.slide, downsample, GridKind::DiscMap);
  const double radius = diameter_px / 2.0;
  const double r2 = radius * radius;
  const double d = downsample;
  for (const auto& a : set.annotations) {
    if (!matches(filter, a.label)) continue;
    // bins whose center (k + 0.5) * D is within radius of the point
    const int c0 = std::max(0, static_cast<int>(std::ceil((a.x_px - radius) / d - 0.5)));
    const int c1 = std::min(grid.cols - 1, static_cast<int>(std::floor((a.x_px + radius) / d - 0.5)));
    const int r0 = std::max(0, static_cast<int>(std::ceil((a.y_px - radius) / d - 0.5)));
    const int r1 = std::min(grid.rows - 1, static_cast<int>(std::floor((a.y_px + radius) / d - 0.5)));
    for (int r = r0; r <= r1; ++r) {
      const double dy = (r + 0.5) * d - a.y_px;
      for (int c = c0; c <= c1; ++c) {
        const double dx = (c + 0.5) * d - a.x_px;
        if (dx * dx + dy * dy <= r2) grid.at(r, c) = 1.0f;
      }
    }
  }
  return grid;
}

// --- summed-area table -----------------------------------------------------

/// Inclusive 2-D prefix sums with a zero guard row and column, so
/// prefix(r, c) holds the sum over source rows [0, r) and columns [0, c).
template <typename Acc = double>
class SummedAreaTable {
 public:
  SummedAreaTable() = default;

  explicit SummedAreaTable(const DensityGrid& grid) : rows_(grid.rows), cols_(grid.cols) {
    const std::size_t stride = static_cast<std::size_t>(cols_) + 1;
    table_.assign((static_cast<std::size_t>(rows_) + 1) * stride, Acc{0});
    for (int r = 0; r < rows_; ++r) {
      Acc row_sum{0};
      for (int c = 0; c < cols_; ++c) {
        const float v = grid.at(r, c);
        if (!std::isfinite(v)) fail(ErrorCode::InvalidArgument, "integral_image: non-finite source value");
        if constexpr (std::is_integral_v<Acc>) {
          if (v != std::floor(v)) fail(ErrorCode::InvalidArgument, "integral_image: integer accumulator needs integer values");
          const Acc iv = static_cast<Acc>(v);
          if (__builtin_add_overflow(row_sum, iv, &row_sum)) fail(ErrorCode::Overflow, "integral_image: accumulator overflow");
          Acc next{};
          if (__builtin_add_overflow(table_[r * stride + c + 1], row_sum, &next)) {
            fail(ErrorCode::Overflow, "integral_image: accumulator overflow");
          }
          table_[(r + 1) * stride + c + 1] = next;
        } else {
          row_sum += static_cast<Acc>(v);
          const Acc next = table_[r * stride + c + 1] + row_sum;
          if (!std::isfinite(next)) fail(ErrorCode::Overflow, "integral_image: accumulator overflow");
          table_[(r + 1) * stride + c + 1] = next;
        }
      }
    }
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  // Sum over source rows [0, r) x columns [0, c).
  Acc prefix(int r, int c) const { return table_[static_cast<std::size_t>(r) * (cols_ + 1) + c]; }

  // S(r, c): sum over source[0..r, 0..c] inclusive.
  Acc at(int r, int c) const { return prefix(r + 1, c + 1); }

  // Sum over rows [top, top+height) x cols [left, left+width).
  Acc window_sum(int top, int left, int height, int width) const {
    const int b = top + height;
    const int rt = left + width;
    return prefix(b, rt) - prefix(top, rt) - prefix(b, left) + prefix(top, left);
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Acc> table_;
};

template <typename Acc = double>
SummedAreaTable<Acc> integral_image(const DensityGrid& grid) {
  return SummedAreaTable<Acc>(grid);
}

// --- moving window ---------------------------------------------------------

enum class WindowMode { Sum, Mean };

struct KernelBins {
  int cols = 1;
  int rows = 1;
};

inline KernelBins kernel_bins(const FoiShape& shape, int downsample) {
  check_downsample(downsample);
  auto bins = [downsample](std::int64_t px) {
    return std::max(1, static_cast<int>(std::floor(static_cast<double>(px) / downsample + 0.5)));
  };
  return {bins(shape.width_px), bins(shape.height_px)};
}

/// Output cell (r, c) holds the window whose top-left bin is (r, c). The
/// window's center bin is (r + rows/2, c + cols/2).
inline DensityGrid moving_window(const DensityGrid& grid, int kernel_cols, int kernel_rows, WindowMode mode) {
  if (kernel_cols < 1 || kernel_rows < 1 || kernel_cols > grid.cols || kernel_rows > grid.rows) {
    fail(ErrorCode::KernelTooLarge, "moving_window: kernel " + std::to_string(kernel_cols) + "x" +
                                        std::to_string(kernel_rows) + " does not fit grid " +
                                        std::to_string(grid.cols) + "x" + std::to_string(grid.rows));
  }
  const SummedAreaTable<double> sat(grid);
  auto out = DensityGrid::zeros(grid.slide_id, grid.downsample, grid.rows - kernel_rows + 1,
                                grid.cols - kernel_cols + 1, GridKind::MaMap);
  const double n = static_cast<double>(kernel_cols) * static_cast<double>(kernel_rows);
  for (int r = 0; r < out.rows; ++r) {
    for (int c = 0; c < out.cols; ++c) {
      const double s = sat.window_sum(r, c, kernel_rows, kernel_cols);
      out.at(r, c) = static_cast<float>(mode == WindowMode::Sum ? s : s / n);
    }
  }
  return out;
}

inline DensityGrid moving_window(const DensityGrid& grid, KernelBins kernel, WindowMode mode) {
  return moving_window(grid, kernel.cols, kernel.rows, mode);
}

/// Kernel dims implied by a full-geometry grid and its moving-window output.
inline KernelBins implied_kernel(const DensityGrid& full, const DensityGrid& windowed) {
  if (windowed.rows > full.rows || windowed.cols > full.cols || windowed.rows < 1 || windowed.cols < 1) {
    fail(ErrorCode::GeometryMismatch, "window map is larger than its full grid");
  }
  return {full.cols - windowed.cols + 1, full.rows - windowed.rows + 1};
}

/// Samples a full-geometry grid at the window centers of a moving-window output,
/// giving a grid with the windowed geometry.
inline DensityGrid at_window_centers(const DensityGrid& full, const DensityGrid& windowed) {
  const auto k = implied_kernel(full, windowed);
  auto out = DensityGrid::zeros(full.slide_id, full.downsample, windowed.rows, windowed.cols, full.kind);
  for (int r = 0; r < out.rows; ++r) {
    for (int c = 0; c < out.cols; ++c) out.at(r, c) = full.at(r + k.rows / 2, c + k.cols / 2);
  }
  return out;
}

// Full-resolution center of the window spanning kernel bins from (r, c).
inline double window_center_x(int c, KernelBins k, int downsample) {
  return (c + k.cols / 2.0) * downsample;
}
inline double window_center_y(int r, KernelBins k, int downsample) {
  return (r + k.rows / 2.0) * downsample;
}

inline RectPx window_span(int r, int c, KernelBins k, int downsample) {
  return RectPx{static_cast<double>(c) * downsample, static_cast<double>(r) * downsample,
                static_cast<double>(k.cols) * downsample, static_cast<double>(k.rows) * downsample};
}

}  // namespace mitoscan
