#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mitoscan/io.hpp"
#include "mitoscan/raster.hpp"
#include "mitoscan/rng.hpp"
#include "mitoscan/tissue_mask.hpp"

// Synthetic slides: soft-edged tissue blobs and a Thomas cluster process of
// mitoses with one planted, boosted cluster.

namespace mitoscan {

inline constexpr float kBackgroundBrightness = 0.9f;

struct SynthParams {
  std::int64_t width_px = 40000;
  std::int64_t height_px = 30000;
  double mpp = kDefaultMpp;
  int downsample = kDefaultDownsample;

  int blob_count = 4;
  double blob_radius_min_mm = 1.2;
  double blob_radius_max_mm = 2.5;
  double blob_edge_mm = 0.3;
  double min_tissue_fraction = 0.2;
  double max_tissue_fraction = 0.9;
  double tissue_threshold = kDefaultTissueThreshold;

  double parent_intensity_per_mm2 = 1.0;
  double offspring_mean = 5.0;
  double offspring_sigma_um = 150.0;
  bool plant_hotspot = true;
  double hotspot_boost = 8.0;
  double hard_negative_per_mm2 = 5.0;

  // the planted parent is drawn among centers whose FOI window is tissue-covered
  double planted_area_mm2 = kTenHpfAreaMm2;
  int planted_aspect_w = kDefaultAspectW;
  int planted_aspect_h = kDefaultAspectH;
  double planted_coverage = kDefaultCoverage;
};

inline void validate(const SynthParams& p) {
  auto bad = [](const std::string& what) { fail(ErrorCode::InvalidParam, "synth: " + what); };
  if (p.width_px < 1 || p.height_px < 1) bad("slide dims must be positive");
  if (!(p.mpp > 0.0)) bad("mpp must be > 0");
  if (p.downsample < 1) bad("downsample must be >= 1");
  if (p.blob_count < 0) bad("blob count must be >= 0");
  if (!(p.blob_radius_min_mm > 0.0) || p.blob_radius_max_mm < p.blob_radius_min_mm) bad("bad blob radius range");
  if (p.blob_edge_mm < 0.0) bad("blob edge must be >= 0");
  if (p.parent_intensity_per_mm2 < 0.0 || p.offspring_mean < 0.0 || p.hard_negative_per_mm2 < 0.0) {
    bad("intensities must be >= 0");
  }
  if (!(p.offspring_sigma_um >= 0.0)) bad("offspring sigma must be >= 0");
  if (!(p.hotspot_boost >= 1.0)) bad("hotspot boost must be >= 1");
}

inline SlideMeta synth_slide(const SynthParams& p, std::string slide_id) {
  return SlideMeta{std::move(slide_id), p.width_px, p.height_px, p.mpp};
}

struct SynthTissue {
  DensityGrid thumbnail;  // brightness in [0, 1], 1 = glass
  BinaryMask tissue;
};

namespace detail {

inline double smoothstep01(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

}  // namespace detail

/// Union of soft-edged discs on a background of 0.9. Tissue brightness is drawn
/// per blob from [0.2, 0.5]. Regenerates until the tissue fraction lies in the
/// configured range, giving up after 100 attempts.
inline SynthTissue synth_tissue(const SynthParams& p, const SlideMeta& slide, std::uint64_t seed) {
  validate(p);
  Rng rng(seed);
  const double mm_per_px = p.mpp * 1e-3;
  const double w_mm = static_cast<double>(p.width_px) * mm_per_px;
  const double h_mm = static_cast<double>(p.height_px) * mm_per_px;
  constexpr int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    struct Blob {
      double cx, cy, radius, level;
    };
    std::vector<Blob> blobs;
    for (int i = 0; i < p.blob_count; ++i) {
      blobs.push_back({rng.uniform(0.0, w_mm), rng.uniform(0.0, h_mm),
                       rng.uniform(p.blob_radius_min_mm, p.blob_radius_max_mm), rng.uniform(0.2, 0.5)});
    }
    auto thumb = slide_grid(slide, p.downsample, GridKind::Estimate);
    for (int r = 0; r < thumb.rows; ++r) {
      const double y_px = (r + 0.5) * p.downsample;
      for (int c = 0; c < thumb.cols; ++c) {
        const double x_px = (c + 0.5) * p.downsample;
        double v = kBackgroundBrightness;
        if (x_px < static_cast<double>(p.width_px) && y_px < static_cast<double>(p.height_px)) {
          for (const auto& b : blobs) {
            const double d = std::hypot(x_px * mm_per_px - b.cx, y_px * mm_per_px - b.cy);
            const double inside = p.blob_edge_mm > 0.0
                                      ? detail::smoothstep01((b.radius + p.blob_edge_mm / 2.0 - d) / p.blob_edge_mm)
                                      : (d <= b.radius ? 1.0 : 0.0);
            v = std::min(v, kBackgroundBrightness - inside * (kBackgroundBrightness - b.level));
          }
        }
        thumb.at(r, c) = static_cast<float>(v);
      }
    }
    auto mask = tissue_from_thumbnail(thumb, p.tissue_threshold);
    const double frac = mask.fraction();
    if (frac > 0.0 && frac >= p.min_tissue_fraction && frac <= p.max_tissue_fraction) {
      return {std::move(thumb), std::move(mask)};
    }
  }
  fail(ErrorCode::Unsatisfiable, "synth_tissue: tissue fraction outside [" + format_real(p.min_tissue_fraction) + ", " +
                                     format_real(p.max_tissue_fraction) + "] after 100 attempts for " + slide.slide_id);
}

struct PlantedRecord {
  std::string slide_id;
  bool planted = false;
  double parent_x_px = 0.0;
  double parent_y_px = 0.0;
  double offspring_mean = 0.0;
  std::int64_t offspring_count = 0;
  std::int64_t background_mitoses = 0;
  std::int64_t hard_negatives = 0;
  double offspring_sigma_px = 0.0;
};

inline nlohmann::json to_json(const PlantedRecord& r) {
  return {{"slide_id", r.slide_id},
          {"planted", r.planted},
          {"parent_x_px", r.parent_x_px},
          {"parent_y_px", r.parent_y_px},
          {"offspring_mean", r.offspring_mean},
          {"offspring_count", r.offspring_count},
          {"background_mitoses", r.background_mitoses},
          {"hard_negatives", r.hard_negatives},
          {"offspring_sigma_px", r.offspring_sigma_px}};
}

struct SynthAnnotations {
  AnnotationSet annotations;
  PlantedRecord planted;
};

namespace detail {

class TissueSampler {
 public:
  TissueSampler(const SlideMeta& slide, const BinaryMask& tissue) : slide_(slide), tissue_(tissue) {
    for (std::size_t i = 0; i < tissue.grid.size(); ++i) {
      if (tissue.grid.values[i] != 0.0f) bins_.push_back(i);
    }
  }

  bool empty() const { return bins_.empty(); }

  bool on_tissue(double x, double y) const {
    if (x < 0.0 || y < 0.0 || x >= static_cast<double>(slide_.width_px) || y >= static_cast<double>(slide_.height_px)) {
      return false;
    }
    const int ds = tissue_.grid.downsample;
    return tissue_.set(static_cast<int>(std::floor(y / ds)), static_cast<int>(std::floor(x / ds)));
  }

  // Point as it will read back from the annotation file, if it stays on tissue.
  std::optional<Annotation> accept(double x, double y, Label label) const {
    const double qx = quantize_coord(x), qy = quantize_coord(y);
    if (!on_tissue(qx, qy)) return std::nullopt;
    return Annotation{qx, qy, label};
  }

  // Uniform over the on-slide part of a uniformly chosen bin from `bins`.
  std::pair<double, double> point_in(const std::vector<std::size_t>& bins, Rng& rng) const {
    const int ds = tissue_.grid.downsample;
    while (true) {
      const auto idx = bins[rng.index(bins.size())];
      const int r = static_cast<int>(idx / static_cast<std::size_t>(tissue_.grid.cols));
      const int c = static_cast<int>(idx % static_cast<std::size_t>(tissue_.grid.cols));
      const double x = (c + rng.uniform()) * ds;
      const double y = (r + rng.uniform()) * ds;
      if (x < static_cast<double>(slide_.width_px) && y < static_cast<double>(slide_.height_px)) return {x, y};
    }
  }

  std::pair<double, double> uniform_point(Rng& rng) const { return point_in(bins_, rng); }

 private:
  const SlideMeta& slide_;
  const BinaryMask& tissue_;
  std::vector<std::size_t> bins_;
};

}  // namespace detail

/// Thomas process on tissue: Poisson(intensity * tissue area) parents, each
/// with Poisson(mean) offspring under isotropic Gaussian scatter; offspring off
/// tissue are dropped. The planted parent gets mean * boost offspring.
inline SynthAnnotations synth_annotations(const SynthParams& p, const SlideMeta& slide, const BinaryMask& tissue,
                                          std::uint64_t seed) {
  validate(p);
  const detail::TissueSampler sampler(slide, tissue);
  if (sampler.empty()) fail(ErrorCode::InvalidArgument, "synth_annotations: tissue mask of " + slide.slide_id + " is empty");
  Rng rng(seed);
  SynthAnnotations out;
  out.annotations.slide = slide;
  out.planted.slide_id = slide.slide_id;
  const double sigma_px = p.offspring_sigma_um / p.mpp;
  out.planted.offspring_sigma_px = sigma_px;

  const double area_mm2 = tissue_area_mm2(slide, tissue);

  auto& pts = out.annotations.annotations;
  auto scatter = [&](double px, double py, std::uint64_t n) {
    std::int64_t kept = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
      const double x = px + rng.normal() * sigma_px;
      const double y = py + rng.normal() * sigma_px;
      if (auto a = sampler.accept(x, y, Label::Mitosis)) {
        pts.push_back(*a);
        ++kept;
      }
    }
    return kept;
  };

  if (p.plant_hotspot) {
    const auto shape = foi_shape(p.planted_area_mm2, p.planted_aspect_w, p.planted_aspect_h, p.mpp);
    const auto kernel = kernel_bins(shape, tissue.grid.downsample);
    std::vector<std::size_t> candidates;
    if (kernel.cols <= tissue.grid.cols && kernel.rows <= tissue.grid.rows) {
      const auto valid = valid_mask(tissue, kernel, p.planted_coverage);
      for (std::size_t i = 0; i < valid.grid.size(); ++i) {
        if (valid.grid.values[i] != 0.0f) candidates.push_back(i);
      }
    }
    const auto [px, py] = candidates.empty() ? sampler.uniform_point(rng) : sampler.point_in(candidates, rng);
    out.planted.planted = true;
    out.planted.parent_x_px = px;
    out.planted.parent_y_px = py;
    out.planted.offspring_mean = p.offspring_mean * p.hotspot_boost;
    out.planted.offspring_count = scatter(px, py, rng.poisson(out.planted.offspring_mean));
  }

  const auto parents = rng.poisson(p.parent_intensity_per_mm2 * area_mm2);
  for (std::uint64_t i = 0; i < parents; ++i) {
    const auto [px, py] = sampler.uniform_point(rng);
    out.planted.background_mitoses += scatter(px, py, rng.poisson(p.offspring_mean));
  }

  const auto negatives = rng.poisson(p.hard_negative_per_mm2 * area_mm2);
  for (std::uint64_t i = 0; i < negatives; ++i) {
    while (true) {
      const auto [x, y] = sampler.uniform_point(rng);
      if (auto a = sampler.accept(x, y, Label::HardNegative)) {
        pts.push_back(*a);
        ++out.planted.hard_negatives;
        break;
      }
    }
  }
  out.annotations.canonicalize();
  return out;
}

struct SynthCase {
  SlideMeta slide;
  SynthTissue tissue;
  SynthAnnotations annotations;
};

inline std::string synth_case_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "case_%03d", index);
  return buf;
}

inline SynthCase synth_case(const SynthParams& p, int index, std::uint64_t seed) {
  const auto case_seed = derive_seed(seed, static_cast<std::uint64_t>(index));
  SynthCase out;
  out.slide = synth_slide(p, synth_case_id(index));
  out.tissue = synth_tissue(p, out.slide, derive_seed(case_seed, 1));
  out.annotations = synth_annotations(p, out.slide, out.tissue.tissue, derive_seed(case_seed, 2));
  return out;
}

}  // namespace mitoscan
