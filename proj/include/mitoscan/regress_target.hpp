#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mitoscan/core.hpp"
#include "mitoscan/io.hpp"
#include "mitoscan/rng.hpp"
#include "mitoscan/tissue_mask.hpp"

namespace mitoscan {

inline constexpr double kDefaultCellDiameterPx = 50.0;
inline constexpr double kDefaultBeta = 10.0;
inline constexpr double kPatchJitterFraction = 0.25;

/// Partial weight of a cell whose center lies `offset` beyond the patch's
/// half extent on one axis (negative = inside). Saturates at d inside, ramps
/// linearly to 0 across [-d/2, d/2], zero outside.
inline double gamma(double offset, double diameter) {
  if (!(diameter > 0.0)) fail(ErrorCode::InvalidArgument, "gamma: diameter must be > 0");
  const double half = diameter / 2.0;
  if (offset < -half) return diameter;
  if (offset > half) return 0.0;
  return half - offset;
}

enum class PatchGroup { WithMitosis, WithHardNegative, Random };

constexpr std::string_view to_string(PatchGroup g) {
  switch (g) {
    case PatchGroup::WithMitosis: return "with_mitosis";
    case PatchGroup::WithHardNegative: return "with_hard_negative";
    case PatchGroup::Random: return "random";
  }
  return "unknown";
}

inline bool parse_patch_group(std::string_view s, PatchGroup& out) {
  for (auto g : {PatchGroup::WithMitosis, PatchGroup::WithHardNegative, PatchGroup::Random}) {
    if (s == to_string(g)) {
      out = g;
      return true;
    }
  }
  return false;
}

struct PatchSpec {
  std::string slide_id;
  RectPx rect;
  PatchGroup group = PatchGroup::Random;
};

struct RegressionTarget {
  PatchSpec patch;
  double c_value = 0.0;
  double beta = kDefaultBeta;
  double diameter_px = kDefaultCellDiameterPx;
};

/// Soft mitosis count of a patch: each mitosis contributes the product of its
/// per-axis partial weights over d^2, and the total is scaled by 1/beta.
inline double soft_count(const AnnotationSet& set, const RectPx& rect, double diameter, double beta) {
  if (!(beta > 0.0)) fail(ErrorCode::InvalidArgument, "soft_count: beta must be > 0");
  const double cx = rect.center_x();
  const double cy = rect.center_y();
  double acc = 0.0;
  for (const auto& a : set.annotations) {
    if (a.label != Label::Mitosis) continue;
    const double gx = gamma(std::abs(a.x_px - cx) - rect.width / 2.0, diameter);
    if (gx == 0.0) continue;
    const double gy = gamma(std::abs(a.y_px - cy) - rect.height / 2.0, diameter);
    acc += gx * gy / (diameter * diameter);
  }
  return acc / beta;
}

inline RegressionTarget patch_target(const AnnotationSet& set, const PatchSpec& patch,
                                     double diameter = kDefaultCellDiameterPx, double beta = kDefaultBeta) {
  return {patch, soft_count(set, patch.rect, diameter, beta), beta, diameter};
}

inline RegressionTarget patch_target(const AnnotationSet& set, const RectPx& rect,
                                     double diameter = kDefaultCellDiameterPx, double beta = kDefaultBeta) {
  return patch_target(set, PatchSpec{set.slide.slide_id, rect, PatchGroup::Random}, diameter, beta);
}

/// Draws `n` patches satisfying the group condition. Conditioned groups are
/// centered on a random annotation of the label, jittered by up to 25 % of the
/// patch extent and clamped into the slide; Random patches are uniform over
/// integer positions whose center bin is tissue.
inline std::vector<PatchSpec> sample_patches(const AnnotationSet& set, const BinaryMask& tissue, PatchGroup group,
                                             int n, std::int64_t patch_w, std::int64_t patch_h, std::uint64_t seed) {
  const auto& slide = set.slide;
  if (n < 1) fail(ErrorCode::InvalidArgument, "sample_patches: n must be >= 1");
  if (patch_w < 1 || patch_h < 1 || patch_w > slide.width_px || patch_h > slide.height_px) {
    fail(ErrorCode::InvalidArgument, "sample_patches: patch does not fit slide " + slide.slide_id);
  }
  Rng rng(seed);
  std::vector<PatchSpec> out;
  out.reserve(static_cast<std::size_t>(n));
  const double w = static_cast<double>(patch_w);
  const double h = static_cast<double>(patch_h);
  const double max_left = static_cast<double>(slide.width_px - patch_w);
  const double max_top = static_cast<double>(slide.height_px - patch_h);

  if (group != PatchGroup::Random) {
    const Label want = group == PatchGroup::WithMitosis ? Label::Mitosis : Label::HardNegative;
    std::vector<const Annotation*> pool;
    for (const auto& a : set.annotations) {
      if (a.label == want) pool.push_back(&a);
    }
    if (pool.empty()) {
      fail(ErrorCode::GroupUnsatisfiable,
           "sample_patches: no " + std::string(to_string(want)) + " annotations on slide " + slide.slide_id);
    }
    for (int i = 0; i < n; ++i) {
      const auto* a = pool[rng.index(pool.size())];
      const double cx = a->x_px + rng.uniform(-kPatchJitterFraction, kPatchJitterFraction) * w;
      const double cy = a->y_px + rng.uniform(-kPatchJitterFraction, kPatchJitterFraction) * h;
      RectPx r{std::clamp(std::floor(cx - w / 2.0 + 0.5), 0.0, max_left),
               std::clamp(std::floor(cy - h / 2.0 + 0.5), 0.0, max_top), w, h};
      // tiny patches can lose the anchor to rounding; pull it back in
      if (!r.contains(a->x_px, a->y_px)) {
        r.left = std::clamp(std::floor(a->x_px - w / 2.0), 0.0, max_left);
        r.top = std::clamp(std::floor(a->y_px - h / 2.0), 0.0, max_top);
      }
      out.push_back({slide.slide_id, r, group});
    }
    return out;
  }

  const auto& grid = tissue.grid;
  const int ds = grid.downsample;
  if (grid.rows != ceil_div(slide.height_px, ds) || grid.cols != ceil_div(slide.width_px, ds)) {
    fail(ErrorCode::GeometryMismatch, "sample_patches: tissue mask does not match slide " + slide.slide_id);
  }
  auto center_bin_is_tissue = [&](double left, double top) {
    const int c = static_cast<int>(std::floor((left + w / 2.0) / ds));
    const int r = static_cast<int>(std::floor((top + h / 2.0) / ds));
    return r < grid.rows && c < grid.cols && tissue.set(r, c);
  };
  // some position must exist: tissue bins reachable by a patch center
  bool reachable = false;
  for (int r = 0; r < grid.rows && !reachable; ++r) {
    for (int c = 0; c < grid.cols && !reachable; ++c) {
      if (!tissue.set(r, c)) continue;
      // integer offsets whose center falls in bin [k*ds, (k+1)*ds)
      auto has_offset = [ds](int k, double half, double max_offset) {
        const double lo = std::max(0.0, std::ceil(static_cast<double>(k) * ds - half));
        const double hi = std::min(max_offset, std::ceil(static_cast<double>(k + 1) * ds - half) - 1.0);
        return lo <= hi;
      };
      reachable = has_offset(c, w / 2.0, max_left) && has_offset(r, h / 2.0, max_top);
    }
  }
  if (!reachable) {
    fail(ErrorCode::GroupUnsatisfiable, "sample_patches: no tissue-centered position on slide " + slide.slide_id);
  }
  constexpr int kMaxAttempts = 1'000'000;
  for (int i = 0; i < n; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      const double left = static_cast<double>(rng.index(static_cast<std::uint64_t>(max_left) + 1));
      const double top = static_cast<double>(rng.index(static_cast<std::uint64_t>(max_top) + 1));
      if (center_bin_is_tissue(left, top)) {
        out.push_back({slide.slide_id, RectPx{left, top, w, h}, group});
        placed = true;
        break;
      }
    }
    if (!placed) fail(ErrorCode::GroupUnsatisfiable, "sample_patches: rejection sampling exhausted on " + slide.slide_id);
  }
  return out;
}

inline constexpr std::string_view kTargetCsvHeader = "slide_id,left,top,width,height,group,c_value";

inline std::string serialize_targets(const std::vector<RegressionTarget>& targets) {
  std::string out(kTargetCsvHeader);
  out += '\n';
  for (const auto& t : targets) {
    out += t.patch.slide_id + ',' + format_real(t.patch.rect.left) + ',' + format_real(t.patch.rect.top) + ',' +
           format_real(t.patch.rect.width) + ',' + format_real(t.patch.rect.height) + ',' +
           std::string(to_string(t.patch.group)) + ',' + format_real(t.c_value) + '\n';
  }
  return out;
}

}  // namespace mitoscan
