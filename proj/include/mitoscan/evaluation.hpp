#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mitoscan/estimators.hpp"
#include "mitoscan/foi_select.hpp"
#include "mitoscan/ground_truth.hpp"
#include "mitoscan/rng.hpp"

namespace mitoscan {

// --- correlation ---------------------------------------------------------------

/// Sample Pearson correlation over cells where `valid` is set. `valid` may
/// share the geometry of `a` or be the full slide grid behind a moving-window
/// map, in which case it is read at window centers.
inline double pearson(const DensityGrid& a, const DensityGrid& b, const BinaryMask& valid) {
  if (a.rows != b.rows || a.cols != b.cols) fail(ErrorCode::GeometryMismatch, "pearson: grids differ in shape");
  const DensityGrid* mask = &valid.grid;
  DensityGrid sampled;
  if (valid.grid.rows != a.rows || valid.grid.cols != a.cols) {
    sampled = at_window_centers(valid.grid, a);
    mask = &sampled;
  }
  double n = 0.0, sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (mask->values[i] == 0.0f) continue;
    n += 1.0;
    sa += a.values[i];
    sb += b.values[i];
  }
  if (n < 2.0) fail(ErrorCode::DegenerateVariance, "pearson: fewer than two valid cells");
  const double ma = sa / n, mb = sb / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (mask->values[i] == 0.0f) continue;
    const double da = a.values[i] - ma, db = b.values[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va <= 0.0 || vb <= 0.0) fail(ErrorCode::DegenerateVariance, "pearson: zero variance over valid cells");
  return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
}

// --- per-selection evaluation ---------------------------------------------------

struct SelectionRecord {
  std::string selector_id;
  std::string slide_id;
  RectPx rect;
  std::optional<double> score;
  std::int64_t gt_mc = 0;
  std::vector<std::pair<SchemeName, std::string>> grades;
  bool achieved_upper_half = false;
  bool achieved_upper_quartile = false;
};

inline std::vector<GradingScheme> default_schemes() { return {kiupel_scheme(), elston_ellis_scheme()}; }

/// Ground-truth MC inside the selection and its standing in the slide's MC
/// distribution; flags are inclusive (>= median, >= upper quartile).
inline SelectionRecord evaluate_selection(const AnnotationSet& set, const FoiSelection& sel, const McDistribution& dist,
                                          const std::vector<GradingScheme>& schemes) {
  if (!sel.rect.inside(static_cast<double>(set.slide.width_px), static_cast<double>(set.slide.height_px))) {
    fail(ErrorCode::RectOutOfBounds, "selection by " + sel.selector_id + " leaves slide " + set.slide.slide_id);
  }
  SelectionRecord rec;
  rec.selector_id = sel.selector_id;
  rec.slide_id = set.slide.slide_id;
  rec.rect = sel.rect;
  rec.score = sel.score;
  rec.gt_mc = count_in_rect(set, sel.rect, LabelFilter::Mitosis);
  for (const auto& s : schemes) rec.grades.emplace_back(s.name, grade(rec.gt_mc, s));
  rec.achieved_upper_half = static_cast<double>(rec.gt_mc) >= dist.p50;
  rec.achieved_upper_quartile = static_cast<double>(rec.gt_mc) >= dist.p75;
  return rec;
}

// --- proportions ------------------------------------------------------------------

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

inline constexpr double kZ95 = 1.96;

inline Interval wilson_interval(std::int64_t successes, std::int64_t n, double z = kZ95) {
  if (n <= 0) fail(ErrorCode::EmptyInput, "wilson_interval: n must be > 0");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  Interval ci{std::max(0.0, center - half), std::min(1.0, center + half)};
  ci.lo = std::min(ci.lo, p);
  ci.hi = std::max(ci.hi, p);
  return ci;
}

struct AchievementStats {
  std::int64_t cases = 0;
  double proportion_upper_half = 0.0;
  double proportion_upper_quartile = 0.0;
  Interval ci_upper_half;
  Interval ci_upper_quartile;
};

inline AchievementStats achievement_stats(const std::vector<SelectionRecord>& records) {
  if (records.empty()) fail(ErrorCode::EmptyInput, "achievement_stats: no records");
  std::int64_t half = 0, quartile = 0;
  for (const auto& r : records) {
    half += r.achieved_upper_half;
    quartile += r.achieved_upper_quartile;
  }
  AchievementStats s;
  s.cases = static_cast<std::int64_t>(records.size());
  s.proportion_upper_half = static_cast<double>(half) / s.cases;
  s.proportion_upper_quartile = static_cast<double>(quartile) / s.cases;
  s.ci_upper_half = wilson_interval(half, s.cases);
  s.ci_upper_quartile = wilson_interval(quartile, s.cases);
  return s;
}

// --- agreement ----------------------------------------------------------------------

struct AgreementInput {
  std::vector<std::string> raters;
  std::vector<std::vector<int>> ratings;  // [case][rater], binary category 0/1
};

enum class KappaVariant { FleissGroup, CohenPairwise };

// Cohen's kappa from a 2x2 confusion table [rater A category][rater B category].
inline double cohen_kappa(const std::array<std::array<double, 2>, 2>& t) {
  const double n = t[0][0] + t[0][1] + t[1][0] + t[1][1];
  if (!(n > 0.0)) fail(ErrorCode::EmptyInput, "cohen_kappa: empty table");
  const double po = (t[0][0] + t[1][1]) / n;
  const double a0 = t[0][0] + t[0][1], a1 = t[1][0] + t[1][1];
  const double b0 = t[0][0] + t[1][0], b1 = t[0][1] + t[1][1];
  const double pe = (a0 * b0 + a1 * b1) / (n * n);
  if (pe >= 1.0) fail(ErrorCode::DegenerateMarginals, "cohen_kappa: expected agreement is 1");
  return (po - pe) / (1.0 - pe);
}

inline void check_ratings(const AgreementInput& in) {
  for (const auto& row : in.ratings) {
    if (row.size() != in.raters.size()) fail(ErrorCode::InvalidArgument, "agreement: incomplete rating matrix");
    for (int v : row) {
      if (v != 0 && v != 1) fail(ErrorCode::InvalidArgument, "agreement: ratings must be binary");
    }
  }
}

inline double fleiss_kappa(const AgreementInput& in) {
  check_ratings(in);
  const auto raters = in.raters.size();
  const auto cases = in.ratings.size();
  if (raters < 2 || cases < 2) fail(ErrorCode::InvalidArgument, "fleiss_kappa: need >= 2 raters and >= 2 cases");
  const double n = static_cast<double>(raters);
  double p_bar = 0.0;
  std::array<double, 2> totals{0.0, 0.0};
  for (const auto& row : in.ratings) {
    std::array<double, 2> counts{0.0, 0.0};
    for (int v : row) counts[v] += 1.0;
    totals[0] += counts[0];
    totals[1] += counts[1];
    p_bar += (counts[0] * counts[0] + counts[1] * counts[1] - n) / (n * (n - 1.0));
  }
  p_bar /= static_cast<double>(cases);
  const double all = n * static_cast<double>(cases);
  const double pe = (totals[0] / all) * (totals[0] / all) + (totals[1] / all) * (totals[1] / all);
  if (pe >= 1.0) fail(ErrorCode::DegenerateMarginals, "fleiss_kappa: all ratings fall in one category");
  return (p_bar - pe) / (1.0 - pe);
}

inline double agreement_kappa(const AgreementInput& in, KappaVariant variant) {
  if (variant == KappaVariant::FleissGroup) return fleiss_kappa(in);
  check_ratings(in);
  if (in.raters.size() != 2) fail(ErrorCode::InvalidArgument, "cohen_kappa: exactly two raters required");
  std::array<std::array<double, 2>, 2> t{};
  for (const auto& row : in.ratings) t[row[0]][row[1]] += 1.0;
  return cohen_kappa(t);
}

// --- reports ----------------------------------------------------------------------------

struct CaseReport {
  std::string slide_id;
  CaseGroup group = CaseGroup::Borderline;
  McDistribution gt_stats;
  std::int64_t exact_max_mc = 0;
  std::vector<SelectionRecord> selections;
  std::map<std::string, std::optional<double>> estimator_pearson;
};

struct CaseInput {
  AnnotationSet annotations;
  BinaryMask tissue;
  BinaryMask valid;
};

struct ReportConfig {
  double area_mm2 = kTenHpfAreaMm2;
  int aspect_w = kDefaultAspectW;
  int aspect_h = kDefaultAspectH;
  int downsample = kDefaultDownsample;
  std::int64_t threshold = kKiupelThreshold;
  bool valid_only_distribution = true;
  std::uint64_t seed = 0;
  std::vector<EstimatorSpec> estimators;
  std::vector<std::string> expected_selectors;
  std::map<std::string, std::vector<std::string>> agreement_groups;
  KappaVariant kappa_variant = KappaVariant::FleissGroup;
};

struct Warning {
  std::string slide_id;  // empty for dataset-level warnings
  std::string subject;
  std::string message;
};

struct ReportSet {
  std::vector<CaseReport> cases;  // sorted by slide_id
  nlohmann::json summary;
  std::vector<Warning> warnings;
};

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t estimator_seed(std::uint64_t seed, const std::string& slide_id, const std::string& estimator_id) {
  return derive_seed(seed, fnv1a(slide_id + "/" + estimator_id));
}

/// Builds one case report. Estimator selections come first, in the order given,
/// followed by the supplied selections in their given order.
inline CaseReport build_case_report(const CaseInput& input, const std::vector<FoiSelection>& selections,
                                    const ReportConfig& cfg, std::vector<Warning>& warnings) {
  const auto& set = input.annotations;
  const auto& slide = set.slide;
  const auto shape = foi_shape(cfg.area_mm2, cfg.aspect_w, cfg.aspect_h, slide.mpp);
  const auto kernel = kernel_bins(shape, cfg.downsample);
  const auto schemes = default_schemes();

  CaseReport rep;
  rep.slide_id = slide.slide_id;
  const auto gt = gt_mc_map(set, shape, cfg.downsample);
  if (!input.valid.grid.same_geometry(slide_grid(slide, cfg.downsample, GridKind::Mask))) {
    fail(ErrorCode::GeometryMismatch, "valid mask does not match slide " + slide.slide_id);
  }
  rep.gt_stats = mc_distribution(gt, cfg.valid_only_distribution ? &input.valid : nullptr);
  rep.group = classify_case(rep.gt_stats, cfg.threshold);
  rep.exact_max_mc =
      exact_max_window(set, static_cast<double>(shape.width_px), static_cast<double>(shape.height_px)).count;

  for (const auto& spec : cfg.estimators) {
    const auto est = estimate(spec, set, input.tissue, cfg.downsample, estimator_seed(cfg.seed, slide.slide_id, spec.id));
    const auto ma = moving_window(est, kernel, WindowMode::Sum);
    try {
      rep.estimator_pearson[spec.id] = pearson(ma, gt, input.valid);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateVariance) throw;
      rep.estimator_pearson[spec.id] = std::nullopt;
      warnings.push_back({slide.slide_id, spec.id, e.what()});
    }
    try {
      auto sel = select_foi(ma, input.valid, shape, cfg.downsample, slide_extent(slide));
      sel.selector_id = spec.id;
      rep.selections.push_back(evaluate_selection(set, sel, rep.gt_stats, schemes));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoValidRegion) throw;
      warnings.push_back({slide.slide_id, spec.id, e.what()});
    }
  }
  for (const auto& sel : selections) rep.selections.push_back(evaluate_selection(set, sel, rep.gt_stats, schemes));
  return rep;
}

inline nlohmann::json to_json(const McDistribution& d) {
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [mc, freq] : d.histogram) hist[std::to_string(mc)] = freq;
  return {{"sample_count", d.sample_count}, {"max_mc", d.max_mc}, {"p25", d.p25},
          {"p50", d.p50},                   {"p75", d.p75},       {"histogram", hist}};
}

inline nlohmann::json to_json(const Interval& i) { return nlohmann::json::array({i.lo, i.hi}); }

inline nlohmann::json to_json(const SelectionRecord& r) {
  nlohmann::json grades = nlohmann::json::object();
  for (const auto& [scheme, label] : r.grades) grades[std::string(to_string(scheme))] = label;
  return {{"selector_id", r.selector_id},
          {"rect_px", {{"left", r.rect.left}, {"top", r.rect.top}, {"width", r.rect.width}, {"height", r.rect.height}}},
          {"score", r.score ? nlohmann::json(*r.score) : nlohmann::json(nullptr)},
          {"gt_mc", r.gt_mc},
          {"grades", grades},
          {"achieved_upper_half", r.achieved_upper_half},
          {"achieved_upper_quartile", r.achieved_upper_quartile}};
}

inline nlohmann::json to_json(const CaseReport& rep) {
  nlohmann::json sels = nlohmann::json::array();
  for (const auto& s : rep.selections) sels.push_back(to_json(s));
  nlohmann::json corr = nlohmann::json::object();
  for (const auto& [id, r] : rep.estimator_pearson) corr[id] = r ? nlohmann::json(*r) : nlohmann::json(nullptr);
  return {{"slide_id", rep.slide_id},        {"group", std::string(to_string(rep.group))},
          {"gt_stats", to_json(rep.gt_stats)}, {"exact_max_mc", rep.exact_max_mc},
          {"selections", sels},              {"estimator_pearson", corr}};
}

inline nlohmann::json to_json(const AchievementStats& s) {
  return {{"cases", s.cases},
          {"proportion_upper_half", s.proportion_upper_half},
          {"proportion_upper_quartile", s.proportion_upper_quartile},
          {"ci95_upper_half", to_json(s.ci_upper_half)},
          {"ci95_upper_quartile", to_json(s.ci_upper_quartile)}};
}

namespace detail {

inline nlohmann::json agreement_summary(const std::vector<CaseReport>& cases, const std::vector<std::string>& raters,
                                        std::int64_t threshold, KappaVariant variant, bool borderline_only) {
  AgreementInput in;
  in.raters = raters;
  std::int64_t skipped = 0;
  for (const auto& rep : cases) {
    if (borderline_only && rep.group != CaseGroup::Borderline) continue;
    std::vector<int> row;
    for (const auto& rater : raters) {
      const auto it = std::find_if(rep.selections.begin(), rep.selections.end(),
                                   [&](const SelectionRecord& s) { return s.selector_id == rater; });
      if (it == rep.selections.end()) break;
      row.push_back(it->gt_mc >= threshold ? 1 : 0);
    }
    if (row.size() == raters.size()) {
      in.ratings.push_back(std::move(row));
    } else {
      ++skipped;
    }
  }
  nlohmann::json out = {{"cases", in.ratings.size()}, {"skipped_incomplete", skipped}, {"kappa", nullptr}};
  try {
    out["kappa"] = agreement_kappa(in, variant);
  } catch (const Error& e) {
    out["error"] = std::string(to_string(e.code()));
  }
  return out;
}

}  // namespace detail

/// Per-case reports plus the aggregate summary: per-selector achievement
/// statistics (overall and by case group), per-estimator correlations,
/// case grouping and rater agreement.
inline ReportSet build_reports(const std::map<std::string, CaseInput>& dataset,
                               const std::vector<FoiSelection>& selections, const ReportConfig& cfg) {
  ReportSet out;
  std::map<std::string, std::vector<FoiSelection>> by_slide;
  std::set<std::string> estimator_ids;
  for (const auto& spec : cfg.estimators) estimator_ids.insert(spec.id);
  for (const auto& sel : selections) {
    if (estimator_ids.count(sel.selector_id)) {
      fail(ErrorCode::InvalidParam, "selector_id " + sel.selector_id + " is also an estimator id");
    }
    if (!dataset.count(sel.slide_id)) {
      fail(ErrorCode::UnknownSlide, "selection by " + sel.selector_id + " references unknown slide_id=" + sel.slide_id);
    }
    by_slide[sel.slide_id].push_back(sel);
  }
  for (const auto& [id, input] : dataset) {
    try {
      out.cases.push_back(build_case_report(input, by_slide[id], cfg, out.warnings));
    } catch (const Error& e) {
      throw Error(e.code(), "slide_id=" + id + ": " + e.what());
    }
  }

  std::map<std::string, std::vector<SelectionRecord>> per_selector;
  std::map<std::string, std::map<CaseGroup, std::vector<SelectionRecord>>> per_selector_group;
  for (const auto& rep : out.cases) {
    for (const auto& rec : rep.selections) {
      per_selector[rec.selector_id].push_back(rec);
      per_selector_group[rec.selector_id][rep.group].push_back(rec);
    }
  }
  for (const auto& id : cfg.expected_selectors) {
    if (!per_selector.count(id)) out.warnings.push_back({"", id, "selector has no selections; omitted from aggregates"});
  }

  nlohmann::json selectors = nlohmann::json::object();
  for (const auto& [id, recs] : per_selector) {
    auto j = to_json(achievement_stats(recs));
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& [g, grecs] : per_selector_group[id]) groups[std::string(to_string(g))] = to_json(achievement_stats(grecs));
    j["by_group"] = groups;
    selectors[id] = j;
  }

  nlohmann::json estimators = nlohmann::json::object();
  for (const auto& spec : cfg.estimators) {
    double sum = 0.0;
    std::int64_t n = 0;
    nlohmann::json per_case = nlohmann::json::object();
    for (const auto& rep : out.cases) {
      const auto it = rep.estimator_pearson.find(spec.id);
      if (it == rep.estimator_pearson.end()) continue;
      per_case[rep.slide_id] = it->second ? nlohmann::json(*it->second) : nlohmann::json(nullptr);
      if (it->second) {
        sum += *it->second;
        ++n;
      }
    }
    estimators[spec.id] = {{"spec", format_estimator_spec(spec)},
                           {"mean_pearson", n > 0 ? nlohmann::json(sum / n) : nlohmann::json(nullptr)},
                           {"per_case", per_case}};
  }

  nlohmann::json groups = {{"ClearlyLow", nlohmann::json::array()},
                           {"Borderline", nlohmann::json::array()},
                           {"ClearlyHigh", nlohmann::json::array()}};
  for (const auto& rep : out.cases) groups[std::string(to_string(rep.group))].push_back(rep.slide_id);

  nlohmann::json agreement = nlohmann::json::object();
  for (const auto& [name, raters] : cfg.agreement_groups) {
    agreement[name] = {
        {"raters", raters},
        {"variant", cfg.kappa_variant == KappaVariant::FleissGroup ? "fleiss" : "cohen"},
        {"all_cases", detail::agreement_summary(out.cases, raters, cfg.threshold, cfg.kappa_variant, false)},
        {"borderline_cases", detail::agreement_summary(out.cases, raters, cfg.threshold, cfg.kappa_variant, true)}};
  }

  nlohmann::json warnings = nlohmann::json::array();
  for (const auto& w : out.warnings) {
    warnings.push_back({{"slide_id", w.slide_id}, {"subject", w.subject}, {"message", w.message}});
  }

  out.summary = {{"cases", out.cases.size()}, {"threshold", cfg.threshold}, {"selectors", selectors},
                 {"estimators", estimators},  {"groups", groups},           {"agreement", agreement},
                 {"warnings", warnings}};
  return out;
}

inline std::string summary_csv(const std::vector<CaseReport>& cases) {
  std::string out =
      "selector_id,slide_id,group,gt_mc,p25,p50,p75,max_mc,achieved_upper_half,achieved_upper_quartile,kiupel,"
      "elston_ellis\n";
  for (const auto& rep : cases) {
    for (const auto& s : rep.selections) {
      std::string kiupel, elston;
      for (const auto& [scheme, label] : s.grades) (scheme == SchemeName::Kiupel ? kiupel : elston) = label;
      out += s.selector_id + ',' + rep.slide_id + ',' + std::string(to_string(rep.group)) + ',' +
             std::to_string(s.gt_mc) + ',' + format_real(rep.gt_stats.p25) + ',' + format_real(rep.gt_stats.p50) + ',' +
             format_real(rep.gt_stats.p75) + ',' + std::to_string(rep.gt_stats.max_mc) + ',' +
             (s.achieved_upper_half ? "1" : "0") + ',' + (s.achieved_upper_quartile ? "1" : "0") + ',' + kiupel + ',' +
             elston + '\n';
    }
  }
  return out;
}

}  // namespace mitoscan
