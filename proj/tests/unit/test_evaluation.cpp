#include <gtest/gtest.h>

#include <random>

#include "mitoscan/evaluation.hpp"
#include "mitoscan/tissue_mask.hpp"
#include "support/expect.hpp"
#include "support/oracles.hpp"

using namespace mitoscan;

namespace {

DensityGrid row(std::vector<float> v) {
  auto g = oracle::grid(1, static_cast<int>(v.size()), GridKind::Estimate);
  g.values = std::move(v);
  return g;
}

BinaryMask ones_like(const DensityGrid& g) {
  BinaryMask m;
  m.grid = oracle::grid(g.rows, g.cols, GridKind::Mask, g.downsample);
  std::fill(m.grid.values.begin(), m.grid.values.end(), 1.0f);
  m.semantics = MaskSemantics::Valid;
  return m;
}

CaseInput random_case(std::mt19937_64& gen, const std::string& id, int n) {
  CaseInput in;
  in.annotations = oracle::random_set(gen, 20000, 16000, n, 0.2);
  in.annotations.slide.slide_id = id;
  in.annotations.canonicalize();
  in.tissue.grid = slide_grid(in.annotations.slide, kDefaultDownsample, GridKind::Mask);
  std::fill(in.tissue.grid.values.begin(), in.tissue.grid.values.end(), 1.0f);
  const auto shape = foi_shape(kTenHpfAreaMm2, kDefaultAspectW, kDefaultAspectH, 0.25);
  in.valid = valid_mask(in.tissue, kernel_bins(shape, kDefaultDownsample));
  return in;
}

}  // namespace

TEST(Pearson, SelfAndNegation) {
  std::mt19937_64 gen(1);
  const auto a = oracle::random_real_grid(gen, 12, 9);
  auto neg = a;
  for (auto& v : neg.values) v = -v;
  const auto m = ones_like(a);
  EXPECT_NEAR(pearson(a, a, m), 1.0, 1e-12);
  EXPECT_NEAR(pearson(a, neg, m), -1.0, 1e-12);
}

TEST(Pearson, TextbookValue) {
  const auto x = row({1, 2, 3, 4});
  const auto y = row({2, 4, 5, 9});
  const double r = pearson(x, y, ones_like(x));
  EXPECT_NEAR(r, oracle::textbook_pearson({1, 2, 3, 4}, {2, 4, 5, 9}), 1e-12);
  EXPECT_NEAR(r, 11.0 / std::sqrt(130.0), 1e-12);
}

TEST(Pearson, SymmetricAffineInvariantMasked) {
  std::mt19937_64 gen(2);
  for (int t = 0; t < 20; ++t) {
    const auto a = oracle::random_real_grid(gen, 10, 11);
    const auto b = oracle::random_real_grid(gen, 10, 11);
    auto m = ones_like(a);
    std::bernoulli_distribution bit(0.6);
    for (auto& v : m.grid.values) v = bit(gen) ? 1.0f : 0.0f;
    auto scaled = a;
    for (auto& v : scaled.values) v = 2.5f * v + 3.0f;
    const double r = pearson(a, b, m);
    EXPECT_NEAR(r, pearson(b, a, m), 1e-12);
    EXPECT_NEAR(r, pearson(scaled, b, m), 1e-5);
    std::vector<double> xa, xb;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (m.grid.values[i] == 0.0f) continue;
      xa.push_back(a.values[i]);
      xb.push_back(b.values[i]);
    }
    EXPECT_NEAR(r, oracle::textbook_pearson(xa, xb), 1e-9);
  }
}

TEST(Pearson, Errors) {
  const auto c = row({3, 3, 3, 3});
  const auto x = row({1, 2, 3, 4});
  EXPECT_EQ(code_of([&] { pearson(c, x, ones_like(x)); }), ErrorCode::DegenerateVariance);
  const auto short_row = row({1, 2, 3});
  EXPECT_EQ(code_of([&] { pearson(x, short_row, ones_like(x)); }), ErrorCode::GeometryMismatch);
  auto one = ones_like(x);
  std::fill(one.grid.values.begin(), one.grid.values.end(), 0.0f);
  one.grid.values[0] = 1.0f;
  EXPECT_EQ(code_of([&] { pearson(x, x, one); }), ErrorCode::DegenerateVariance);
}

TEST(EvaluateSelection, FlagsAndGrades) {
  AnnotationSet s;
  s.slide = SlideMeta{"s", 1000, 1000, 0.25};
  for (int i = 0; i < 8; ++i) s.annotations.push_back({100.0 + i, 100.0, Label::Mitosis});
  std::vector<std::int64_t> v(100);
  for (int i = 0; i < 100; ++i) v[i] = i / 10;  // p25 = 2, p50 = 5, p75 = 7
  const auto dist = distribution_from_values("s", v);
  ASSERT_EQ(dist.p50, 5.0);
  FoiSelection sel;
  sel.slide_id = "s";
  sel.selector_id = "rater";
  sel.rect = RectPx{0, 0, 500, 500};
  auto rec = evaluate_selection(s, sel, dist, default_schemes());
  EXPECT_EQ(rec.gt_mc, 8);
  EXPECT_TRUE(rec.achieved_upper_half);
  EXPECT_TRUE(rec.achieved_upper_quartile);
  EXPECT_EQ(rec.grades[0].second, "HighGrade");
  EXPECT_EQ(rec.grades[1].second, "Low");
  // exactly the median counts as achieved
  sel.rect = RectPx{0, 0, 105, 500};
  rec = evaluate_selection(s, sel, dist, default_schemes());
  EXPECT_EQ(rec.gt_mc, 5);
  EXPECT_TRUE(rec.achieved_upper_half);
  EXPECT_FALSE(rec.achieved_upper_quartile);
  sel.rect = RectPx{0, 0, 101, 500};
  rec = evaluate_selection(s, sel, dist, default_schemes());
  EXPECT_FALSE(rec.achieved_upper_half);
  EXPECT_FALSE(rec.achieved_upper_quartile);
  sel.rect = RectPx{600, 600, 500, 100};
  EXPECT_EQ(code_of([&] { evaluate_selection(s, sel, dist, default_schemes()); }), ErrorCode::RectOutOfBounds);
}

TEST(Grades, BandEdges) {
  EXPECT_EQ(grade(6, kiupel_scheme()), "LowGrade");
  EXPECT_EQ(grade(7, kiupel_scheme()), "HighGrade");
  EXPECT_EQ(grade(9, elston_ellis_scheme()), "Low");
  EXPECT_EQ(grade(10, elston_ellis_scheme()), "Moderate");
  EXPECT_EQ(grade(19, elston_ellis_scheme()), "Moderate");
  EXPECT_EQ(grade(20, elston_ellis_scheme()), "High");
}

TEST(Wilson, KnownIntervals) {
  auto a = wilson_interval(10, 10);
  EXPECT_NEAR(a.lo, 0.7225, 5e-4);
  EXPECT_EQ(a.hi, 1.0);
  auto b = wilson_interval(0, 10);
  EXPECT_EQ(b.lo, 0.0);
  EXPECT_NEAR(b.hi, 0.2775, 5e-4);
  auto c = wilson_interval(1, 1);
  EXPECT_NEAR(c.lo, 0.2065, 5e-4);
  EXPECT_EQ(code_of([] { wilson_interval(0, 0); }), ErrorCode::EmptyInput);
}

TEST(Wilson, MatchesOracleAndContainsP) {
  for (int n = 1; n <= 60; ++n) {
    for (int k = 0; k <= n; ++k) {
      const auto ci = wilson_interval(k, n);
      const auto [lo, hi] = oracle::wilson(k, n);
      EXPECT_NEAR(ci.lo, lo, 1e-12);
      EXPECT_NEAR(ci.hi, hi, 1e-12);
      EXPECT_LE(ci.lo, static_cast<double>(k) / n);
      EXPECT_GE(ci.hi, static_cast<double>(k) / n);
    }
  }
  // narrows with n at a fixed proportion
  EXPECT_LT(wilson_interval(50, 100).hi - wilson_interval(50, 100).lo,
            wilson_interval(5, 10).hi - wilson_interval(5, 10).lo);
}

TEST(Kappa, CohenTable) {
  EXPECT_NEAR(cohen_kappa({{{20, 5}, {10, 15}}}), 0.4, 1e-12);
  EXPECT_EQ(code_of([] { cohen_kappa({{{10, 0}, {0, 0}}}); }), ErrorCode::DegenerateMarginals);
  AgreementInput in;
  in.raters = {"a", "b"};
  for (int i = 0; i < 20; ++i) in.ratings.push_back({1, 1});
  for (int i = 0; i < 5; ++i) in.ratings.push_back({1, 0});
  for (int i = 0; i < 10; ++i) in.ratings.push_back({0, 1});
  for (int i = 0; i < 15; ++i) in.ratings.push_back({0, 0});
  EXPECT_NEAR(agreement_kappa(in, KappaVariant::CohenPairwise), 0.4, 1e-12);
}

TEST(Kappa, FleissUnanimousAndOracle) {
  AgreementInput in;
  in.raters = {"a", "b", "c"};
  in.ratings = {{1, 1, 1}, {0, 0, 0}, {1, 1, 1}, {0, 0, 0}};
  EXPECT_NEAR(fleiss_kappa(in), 1.0, 1e-12);
  in.ratings = {{1, 1, 1}, {1, 1, 1}};
  EXPECT_EQ(code_of([&] { fleiss_kappa(in); }), ErrorCode::DegenerateMarginals);
  in.ratings = {{1, 1}, {0, 0}};
  EXPECT_EQ(code_of([&] { fleiss_kappa(in); }), ErrorCode::InvalidArgument);

  std::mt19937_64 gen(4);
  std::bernoulli_distribution bit(0.4);
  for (int t = 0; t < 30; ++t) {
    AgreementInput r;
    r.raters = {"a", "b", "c", "d"};
    for (int i = 0; i < 25; ++i) r.ratings.push_back({bit(gen), bit(gen), bit(gen), bit(gen)});
    EXPECT_NEAR(fleiss_kappa(r), oracle::fleiss(r.ratings), 1e-12);
  }
}

TEST(BuildReports, OracleScoreIsMapMaximumAtValidCenters) {
  std::mt19937_64 gen(5);
  std::map<std::string, CaseInput> data;
  for (int i = 0; i < 3; ++i) {
    const auto id = "c" + std::to_string(i);
    data[id] = random_case(gen, id, 200 + 300 * i);
  }
  ReportConfig cfg;
  cfg.estimators = {parse_estimator_spec("oracle")};
  const auto out = build_reports(data, {}, cfg);
  ASSERT_EQ(out.cases.size(), 3u);
  for (const auto& rep : out.cases) {
    const auto& in = data.at(rep.slide_id);
    const auto shape = foi_shape(kTenHpfAreaMm2, kDefaultAspectW, kDefaultAspectH, 0.25);
    const auto gt = gt_mc_map(in.annotations, shape, kDefaultDownsample);
    const auto centers = at_window_centers(in.valid.grid, gt);
    double best = -1;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (centers.values[i] != 0.0f) best = std::max<double>(best, gt.values[i]);
    }
    ASSERT_EQ(rep.selections.size(), 1u);
    EXPECT_EQ(*rep.selections[0].score, best);
    EXPECT_EQ(rep.gt_stats.max_mc, static_cast<std::int64_t>(best));
    EXPECT_TRUE(rep.selections[0].achieved_upper_quartile);
    EXPECT_NEAR(*rep.estimator_pearson.at("oracle"), 1.0, 1e-9);
    EXPECT_GE(rep.exact_max_mc, rep.selections[0].gt_mc);
  }
  std::size_t grouped = 0;
  for (const auto& [name, ids] : out.summary["groups"].items()) grouped += ids.size();
  EXPECT_EQ(grouped, 3u);
  EXPECT_EQ(out.summary["selectors"]["oracle"]["cases"], 3);
}

TEST(BuildReports, WarningsAndErrors) {
  std::mt19937_64 gen(6);
  std::map<std::string, CaseInput> data;
  data["a"] = random_case(gen, "a", 100);
  ReportConfig cfg;
  cfg.estimators = {parse_estimator_spec("oracle")};
  cfg.expected_selectors = {"oracle", "pathologist_1"};
  const auto out = build_reports(data, {}, cfg);
  ASSERT_EQ(out.warnings.size(), 1u);
  EXPECT_EQ(out.warnings[0].subject, "pathologist_1");
  EXPECT_FALSE(out.summary["selectors"].contains("pathologist_1"));

  FoiSelection sel;
  sel.slide_id = "missing";
  sel.selector_id = "p";
  sel.rect = RectPx{0, 0, 10, 10};
  try {
    build_reports(data, {sel}, cfg);
    ADD_FAILURE() << "no error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownSlide);
    EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
  }
  sel.slide_id = "a";
  sel.selector_id = "oracle";
  EXPECT_EQ(code_of([&] { build_reports(data, {sel}, cfg); }), ErrorCode::InvalidParam);
}

TEST(BuildReports, AgreementAcrossSelectors) {
  std::mt19937_64 gen(7);
  std::map<std::string, CaseInput> data;
  std::vector<FoiSelection> sels;
  for (int i = 0; i < 6; ++i) {
    const auto id = "s" + std::to_string(i);
    data[id] = random_case(gen, id, 400);
    for (const char* who : {"r1", "r2"}) {
      FoiSelection f;
      f.slide_id = id;
      f.selector_id = who;
      f.rect = centered_rect(10000, 8000, 7111, 5333);
      sels.push_back(f);
    }
  }
  ReportConfig cfg;
  cfg.agreement_groups["pair"] = {"r1", "r2"};
  const auto out = build_reports(data, sels, cfg);
  // identical selections always agree; kappa is 1 unless one category is empty
  const auto& all = out.summary["agreement"]["pair"]["all_cases"];
  EXPECT_EQ(all["cases"], 6);
  if (!all["kappa"].is_null()) {
    EXPECT_NEAR(all["kappa"].get<double>(), 1.0, 1e-12);
  }
  const auto csv = summary_csv(out.cases);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 12);
}

TEST(Seeds, EstimatorSeedsDiffer) {
  EXPECT_NE(estimator_seed(1, "a", "x"), estimator_seed(1, "a", "y"));
  EXPECT_NE(estimator_seed(1, "a", "x"), estimator_seed(1, "b", "x"));
  EXPECT_NE(estimator_seed(1, "a", "x"), estimator_seed(2, "a", "x"));
  EXPECT_EQ(estimator_seed(1, "a", "x"), estimator_seed(1, "a", "x"));
}
