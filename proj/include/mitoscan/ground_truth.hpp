#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mitoscan/raster.hpp"
#include "mitoscan/tissue_mask.hpp"

namespace mitoscan {

inline constexpr std::int64_t kKiupelThreshold = 7;

// Half-open membership, consistent with binning.
inline std::int64_t count_in_rect(const AnnotationSet& set, const RectPx& rect, LabelFilter filter = LabelFilter::Mitosis) {
  std::int64_t n = 0;
  for (const auto& a : set.annotations) {
    if (matches(filter, a.label) && rect.contains(a.x_px, a.y_px)) ++n;
  }
  return n;
}

/// Grid ground-truth MC map: window sums of binned mitoses, indexed by window top-left.
inline DensityGrid gt_mc_map(const AnnotationSet& set, const FoiShape& shape, int downsample) {
  const auto bins = bin_points(set, LabelFilter::Mitosis, downsample);
  return moving_window(bins, kernel_bins(shape, downsample), WindowMode::Sum);
}

// FOI rectangle centered on the window whose top-left bin is (r, c).
inline RectPx aligned_rect(int r, int c, KernelBins k, int downsample, const FoiShape& shape) {
  return centered_rect(window_center_x(c, k, downsample), window_center_y(r, k, downsample),
                       static_cast<double>(shape.width_px), static_cast<double>(shape.height_px));
}

/// Points within `band` of the rectangle boundary, on either side.
inline std::int64_t boundary_band_count(const AnnotationSet& set, const RectPx& rect, double band,
                                        LabelFilter filter = LabelFilter::Mitosis) {
  std::int64_t n = 0;
  for (const auto& a : set.annotations) {
    if (matches(filter, a.label) && distance_to_boundary(rect, a.x_px, a.y_px) <= band) ++n;
  }
  return n;
}

// --- exact maximum window -----------------------------------------------------

namespace detail {

// Range add, range max with leftmost argmax, over a fixed index domain.
class MaxAddSegmentTree {
 public:
  explicit MaxAddSegmentTree(std::size_t n) : n_(n), max_(4 * std::max<std::size_t>(n, 1), 0), add_(max_.size(), 0) {}

  void add(std::size_t lo, std::size_t hi, int delta) { add(1, 0, n_ - 1, lo, hi, delta); }

  // {max value, leftmost index attaining it} over the whole domain
  std::pair<int, std::size_t> max() const {
    std::size_t node = 1, l = 0, r = n_ - 1;
    while (l < r) {
      const std::size_t mid = (l + r) / 2;
      if (max_[2 * node] >= max_[2 * node + 1]) {
        node = 2 * node;
        r = mid;
      } else {
        node = 2 * node + 1;
        l = mid + 1;
      }
    }
    return {max_[1], l};
  }

 private:
  void add(std::size_t node, std::size_t l, std::size_t r, std::size_t lo, std::size_t hi, int delta) {
    if (hi < l || r < lo) return;
    if (lo <= l && r <= hi) {
      max_[node] += delta;
      add_[node] += delta;
      return;
    }
    const std::size_t mid = (l + r) / 2;
    add(2 * node, l, mid, lo, hi, delta);
    add(2 * node + 1, mid + 1, r, lo, hi, delta);
    max_[node] = std::max(max_[2 * node], max_[2 * node + 1]) + add_[node];
  }

  std::size_t n_;
  std::vector<int> max_;  // subtree max including this node's pending add
  std::vector<int> add_;
};

}  // namespace detail

struct ExactMax {
  std::int64_t count = 0;
  double anchor_x = 0.0;  // window top-left
  double anchor_y = 0.0;
};

/// Maximum number of points covered by a closed w x h window over all real
/// placements. A window anchored at (ax, ay) covers p iff p.x - w <= ax <= p.x
/// and p.y - h <= ay <= p.y, so each point contributes a feasibility
/// rectangle and the answer is their deepest overlap. The x-sweep inserts
/// before it removes at equal coordinates; y uses a segment tree over the
/// compressed interval endpoints. O(n log n).
inline ExactMax exact_max_window(const AnnotationSet& set, double width_px, double height_px,
                                 LabelFilter filter = LabelFilter::Mitosis) {
  if (!(width_px > 0.0) || !(height_px > 0.0)) fail(ErrorCode::InvalidArgument, "exact_max_window: dims must be > 0");
  std::vector<const Annotation*> pts;
  for (const auto& a : set.annotations) {
    if (matches(filter, a.label)) pts.push_back(&a);
  }
  if (pts.empty()) return {};

  std::vector<double> ys;
  ys.reserve(pts.size() * 2);
  for (const auto* p : pts) {
    ys.push_back(p->y_px - height_px);
    ys.push_back(p->y_px);
  }
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
  auto y_index = [&ys](double v) {
    return static_cast<std::size_t>(std::lower_bound(ys.begin(), ys.end(), v) - ys.begin());
  };

  struct Event {
    double x;
    bool insert;
    std::size_t lo, hi;
  };
  std::vector<Event> events;
  events.reserve(pts.size() * 2);
  for (const auto* p : pts) {
    const std::size_t lo = y_index(p->y_px - height_px);
    const std::size_t hi = y_index(p->y_px);
    events.push_back({p->x_px - width_px, true, lo, hi});
    events.push_back({p->x_px, false, lo, hi});
  }
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.x != b.x) return a.x < b.x;
    return a.insert && !b.insert;
  });

  detail::MaxAddSegmentTree tree(ys.size());
  ExactMax best;
  std::size_t i = 0;
  while (i < events.size()) {
    const double x = events[i].x;
    bool inserted = false;
    for (; i < events.size() && events[i].x == x && events[i].insert; ++i) {
      tree.add(events[i].lo, events[i].hi, +1);
      inserted = true;
    }
    if (inserted) {
      const auto [depth, idx] = tree.max();
      if (depth > best.count) best = {depth, x, ys[idx]};
    }
    for (; i < events.size() && events[i].x == x && !events[i].insert; ++i) {
      tree.add(events[i].lo, events[i].hi, -1);
    }
  }
  return best;
}

// --- distributions and case grouping -------------------------------------------

struct McDistribution {
  std::string slide_id;
  std::int64_t sample_count = 0;
  std::int64_t max_mc = 0;
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
  std::map<std::int64_t, std::int64_t> histogram;

  double fraction_at_least(std::int64_t threshold) const {
    if (sample_count == 0) return 0.0;
    std::int64_t n = 0;
    for (auto it = histogram.lower_bound(threshold); it != histogram.end(); ++it) n += it->second;
    return static_cast<double>(n) / static_cast<double>(sample_count);
  }
};

// Nearest rank: the value at 1-based rank floor(p*n)+1 of the sorted sample,
// clamped to n. For 0..99 this gives p25 = 25, p50 = 50, p75 = 75.
inline double nearest_rank(const std::vector<std::int64_t>& sorted, double p) {
  const auto n = sorted.size();
  auto rank = static_cast<std::size_t>(std::floor(p * static_cast<double>(n))) + 1;
  rank = std::min(rank, n);
  return static_cast<double>(sorted[rank - 1]);
}

inline McDistribution distribution_from_values(std::string slide_id, std::vector<std::int64_t> values) {
  if (values.empty()) fail(ErrorCode::NoValidRegion, "mc_distribution: no valid centers on slide " + slide_id);
  std::sort(values.begin(), values.end());
  McDistribution d;
  d.slide_id = std::move(slide_id);
  d.sample_count = static_cast<std::int64_t>(values.size());
  d.max_mc = values.back();
  d.p25 = nearest_rank(values, 0.25);
  d.p50 = nearest_rank(values, 0.50);
  d.p75 = nearest_rank(values, 0.75);
  for (auto v : values) ++d.histogram[v];
  return d;
}

/// MC distribution over map values at valid window centers, or over every
/// window position when `valid` is absent.
inline McDistribution mc_distribution(const DensityGrid& map, const BinaryMask* valid) {
  std::vector<std::int64_t> values;
  if (valid != nullptr) {
    const auto k = implied_kernel(valid->grid, map);
    for (int r = 0; r < map.rows; ++r) {
      for (int c = 0; c < map.cols; ++c) {
        if (valid->set(r + k.rows / 2, c + k.cols / 2)) values.push_back(std::llround(map.at(r, c)));
      }
    }
  } else {
    for (float v : map.values) values.push_back(std::llround(v));
  }
  return distribution_from_values(map.slide_id, std::move(values));
}

inline McDistribution mc_distribution(const DensityGrid& map, const BinaryMask& valid) {
  return mc_distribution(map, &valid);
}

enum class CaseGroup { ClearlyLow, Borderline, ClearlyHigh };

constexpr std::string_view to_string(CaseGroup g) {
  switch (g) {
    case CaseGroup::ClearlyLow: return "ClearlyLow";
    case CaseGroup::Borderline: return "Borderline";
    case CaseGroup::ClearlyHigh: return "ClearlyHigh";
  }
  return "Unknown";
}

inline CaseGroup classify_case(const McDistribution& dist, std::int64_t threshold = kKiupelThreshold) {
  if (dist.max_mc < threshold) return CaseGroup::ClearlyLow;
  if (dist.fraction_at_least(threshold) > 0.75) return CaseGroup::ClearlyHigh;
  return CaseGroup::Borderline;
}

}  // namespace mitoscan
