#include <gtest/gtest.h>

#include <cmath>

#include "mitoscan/synth.hpp"
#include "support/expect.hpp"

using namespace mitoscan;

namespace {

// 10 x 7.5 mm, one disc far larger than the slide: every bin is tissue.
SynthParams covered() {
  SynthParams p;
  p.width_px = 40000;
  p.height_px = 30000;
  p.blob_count = 1;
  p.blob_radius_min_mm = p.blob_radius_max_mm = 100.0;
  p.min_tissue_fraction = 0.0;
  p.max_tissue_fraction = 1.0;
  p.hard_negative_per_mm2 = 0.0;
  return p;
}

bool on_tissue(const BinaryMask& m, double x, double y) {
  const int ds = m.grid.downsample;
  return m.set(static_cast<int>(std::floor(y / ds)), static_cast<int>(std::floor(x / ds)));
}

}  // namespace

TEST(Synth, Deterministic) {
  SynthParams p;
  const auto a = synth_case(p, 3, 42);
  const auto b = synth_case(p, 3, 42);
  const auto c = synth_case(p, 3, 43);
  EXPECT_EQ(a.slide.slide_id, "case_003");
  EXPECT_EQ(a.tissue.thumbnail.values, b.tissue.thumbnail.values);
  EXPECT_EQ(a.annotations.annotations.annotations, b.annotations.annotations.annotations);
  EXPECT_NE(a.annotations.annotations.annotations, c.annotations.annotations.annotations);
}

TEST(Synth, DefaultsStayOnTissue) {
  SynthParams p;
  for (int i = 0; i < 3; ++i) {
    const auto sc = synth_case(p, i, 7);
    const double frac = sc.tissue.tissue.fraction();
    EXPECT_GE(frac, p.min_tissue_fraction);
    EXPECT_LE(frac, p.max_tissue_fraction);
    std::int64_t mitoses = 0, negatives = 0;
    for (const auto& a : sc.annotations.annotations.annotations) {
      EXPECT_TRUE(on_tissue(sc.tissue.tissue, a.x_px, a.y_px));
      EXPECT_EQ(a.x_px, quantize_coord(a.x_px));
      (a.label == Label::Mitosis ? mitoses : negatives) += 1;
    }
    const auto& rec = sc.annotations.planted;
    EXPECT_TRUE(rec.planted);
    EXPECT_EQ(mitoses, rec.offspring_count + rec.background_mitoses);
    EXPECT_EQ(negatives, rec.hard_negatives);
    EXPECT_GT(negatives, 0);
  }
}

TEST(Synth, NoBlobsIsUnsatisfiable) {
  SynthParams p;
  p.blob_count = 0;
  EXPECT_EQ(code_of([&] { synth_case(p, 0, 1); }), ErrorCode::Unsatisfiable);
}

TEST(Synth, InvalidParams) {
  SynthParams p;
  p.hotspot_boost = 0.5;
  EXPECT_EQ(code_of([&] { synth_case(p, 0, 1); }), ErrorCode::InvalidParam);
  p = SynthParams{};
  p.offspring_sigma_um = -1;
  EXPECT_EQ(code_of([&] { synth_case(p, 0, 1); }), ErrorCode::InvalidParam);
}

TEST(Synth, OnlyPlantedCluster) {
  auto p = covered();
  p.parent_intensity_per_mm2 = 0.0;
  p.offspring_mean = 5.0;
  p.hotspot_boost = 8.0;
  for (int seed = 0; seed < 5; ++seed) {
    const auto sc = synth_case(p, 0, static_cast<std::uint64_t>(seed));
    const auto& rec = sc.annotations.planted;
    EXPECT_EQ(rec.background_mitoses, 0);
    EXPECT_EQ(static_cast<std::int64_t>(sc.annotations.annotations.annotations.size()), rec.offspring_count);
    EXPECT_GT(rec.offspring_count, 0);
    for (const auto& a : sc.annotations.annotations.annotations) {
      EXPECT_LT(std::hypot(a.x_px - rec.parent_x_px, a.y_px - rec.parent_y_px), 8 * rec.offspring_sigma_px);
    }
  }
}

TEST(Synth, ZeroOffspringMean) {
  auto p = covered();
  p.offspring_mean = 0.0;
  p.hotspot_boost = 1.0;
  const auto sc = synth_case(p, 0, 9);
  EXPECT_TRUE(sc.annotations.annotations.annotations.empty());
}

TEST(Synth, CompoundPoissonMean) {
  // parents ~ Poisson(40), offspring ~ Poisson(5): mean 200, variance 1200
  auto p = covered();
  p.plant_hotspot = false;
  p.offspring_sigma_um = 0.0;
  p.offspring_mean = 5.0;
  p.parent_intensity_per_mm2 = 40.0 / 75.0;
  constexpr int kSeeds = 100;
  double total = 0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const auto sc = synth_case(p, 0, static_cast<std::uint64_t>(seed));
    EXPECT_FALSE(sc.annotations.planted.planted);
    total += static_cast<double>(sc.annotations.annotations.annotations.size());
  }
  const double se = std::sqrt(1200.0 / kSeeds);
  EXPECT_NEAR(total / kSeeds, 200.0, 3 * se);
}

TEST(Synth, PlantedParentHasValidWindow) {
  SynthParams p;
  for (int i = 0; i < 4; ++i) {
    const auto sc = synth_case(p, i, 11);
    const auto& rec = sc.annotations.planted;
    EXPECT_TRUE(on_tissue(sc.tissue.tissue, rec.parent_x_px, rec.parent_y_px));
  }
}
