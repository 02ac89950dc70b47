#pragma once

#include <vector>

#include "mitoscan/raster.hpp"

namespace mitoscan {

inline constexpr double kDefaultTissueThreshold = 0.8;
inline constexpr int kDefaultCloseRadius = 3;
inline constexpr double kDefaultCoverage = 0.95;

enum class MaskSemantics { Tissue, Valid };

struct BinaryMask {
  DensityGrid grid;  // kind Mask, values in {0, 1}
  MaskSemantics semantics = MaskSemantics::Tissue;

  bool set(int r, int c) const { return grid.at(r, c) != 0.0f; }
  std::size_t count() const {
    std::size_t n = 0;
    for (float v : grid.values) n += v != 0.0f;
    return n;
  }
  double fraction() const { return grid.size() == 0 ? 0.0 : static_cast<double>(count()) / grid.size(); }
};

/// Tissue is darker than glass: set where gray < threshold. Gray is
/// normalized brightness with 1 = bright background.
inline BinaryMask tissue_from_thumbnail(const DensityGrid& gray, double threshold) {
  BinaryMask m;
  m.grid = DensityGrid::zeros(gray.slide_id, gray.downsample, gray.rows, gray.cols, GridKind::Mask);
  m.semantics = MaskSemantics::Tissue;
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const float v = gray.values[i];
    if (!(v >= 0.0f && v <= 1.0f)) fail(ErrorCode::InvalidRange, "thumbnail " + gray.slide_id + ": value outside [0,1]");
    m.grid.values[i] = v < threshold ? 1.0f : 0.0f;
  }
  return m;
}

struct Offset {
  int dr;
  int dc;
};

// Discrete disc: all offsets with dr^2 + dc^2 <= radius^2.
inline std::vector<Offset> disc_offsets(int radius) {
  std::vector<Offset> out;
  for (int dr = -radius; dr <= radius; ++dr) {
    for (int dc = -radius; dc <= radius; ++dc) {
      if (dr * dr + dc * dc <= radius * radius) out.push_back({dr, dc});
    }
  }
  return out;
}

namespace detail {

// Out-of-grid neighbours are ignored by dilation and treated as set by erosion,
// which keeps dilation and erosion an adjoint pair on the grid domain.
inline DensityGrid dilate(const DensityGrid& in, const std::vector<Offset>& se) {
  auto out = DensityGrid::zeros(in.slide_id, in.downsample, in.rows, in.cols, GridKind::Mask);
  for (int r = 0; r < in.rows; ++r) {
    for (int c = 0; c < in.cols; ++c) {
      if (in.at(r, c) == 0.0f) continue;
      for (const auto& o : se) {
        const int rr = r + o.dr, cc = c + o.dc;
        if (rr >= 0 && cc >= 0 && rr < in.rows && cc < in.cols) out.at(rr, cc) = 1.0f;
      }
    }
  }
  return out;
}

inline DensityGrid erode(const DensityGrid& in, const std::vector<Offset>& se) {
  auto out = DensityGrid::zeros(in.slide_id, in.downsample, in.rows, in.cols, GridKind::Mask);
  for (int r = 0; r < in.rows; ++r) {
    for (int c = 0; c < in.cols; ++c) {
      bool all = true;
      for (const auto& o : se) {
        const int rr = r + o.dr, cc = c + o.dc;
        if (rr >= 0 && cc >= 0 && rr < in.rows && cc < in.cols && in.at(rr, cc) == 0.0f) {
          all = false;
          break;
        }
      }
      out.at(r, c) = all ? 1.0f : 0.0f;
    }
  }
  return out;
}

}  // namespace detail

inline BinaryMask morph_close(const BinaryMask& mask, int radius_bins) {
  if (radius_bins < 0) fail(ErrorCode::InvalidArgument, "morph_close: radius must be >= 0");
  if (radius_bins == 0) return mask;
  const auto se = disc_offsets(radius_bins);
  BinaryMask out;
  out.semantics = mask.semantics;
  out.grid = detail::erode(detail::dilate(mask.grid, se), se);
  return out;
}

/// A center is valid when the kernel window around it fits the grid and is
/// covered by tissue to at least `coverage`. Output has the full grid
/// geometry; centers whose window does not fit stay zero.
inline BinaryMask valid_mask(const BinaryMask& tissue, int kernel_cols, int kernel_rows,
                             double coverage = kDefaultCoverage) {
  const auto mean = moving_window(tissue.grid, kernel_cols, kernel_rows, WindowMode::Sum);
  const double n = static_cast<double>(kernel_cols) * kernel_rows;
  BinaryMask out;
  out.semantics = MaskSemantics::Valid;
  out.grid = DensityGrid::zeros(tissue.grid.slide_id, tissue.grid.downsample, tissue.grid.rows, tissue.grid.cols,
                                GridKind::Mask);
  for (int r = 0; r < mean.rows; ++r) {
    for (int c = 0; c < mean.cols; ++c) {
      // window sums of a 0/1 mask are exact integers
      const double fraction = static_cast<double>(mean.at(r, c)) / n;
      if (fraction >= coverage) out.grid.at(r + kernel_rows / 2, c + kernel_cols / 2) = 1.0f;
    }
  }
  return out;
}

inline BinaryMask valid_mask(const BinaryMask& tissue, KernelBins kernel, double coverage = kDefaultCoverage) {
  return valid_mask(tissue, kernel.cols, kernel.rows, coverage);
}

// Area in mm^2 of the part of bin (r, c) that lies on the slide.
inline double bin_area_mm2(const SlideMeta& slide, int downsample, int r, int c) {
  const double w = std::min<double>(downsample, static_cast<double>(slide.width_px) - static_cast<double>(c) * downsample);
  const double h = std::min<double>(downsample, static_cast<double>(slide.height_px) - static_cast<double>(r) * downsample);
  const double s = slide.mpp * 1e-3;
  return std::max(0.0, w) * std::max(0.0, h) * s * s;
}

inline double tissue_area_mm2(const SlideMeta& slide, const BinaryMask& tissue) {
  double a = 0.0;
  for (int r = 0; r < tissue.grid.rows; ++r) {
    for (int c = 0; c < tissue.grid.cols; ++c) {
      if (tissue.set(r, c)) a += bin_area_mm2(slide, tissue.grid.downsample, r, c);
    }
  }
  return a;
}

}  // namespace mitoscan
