#include <gtest/gtest.h>

#include <random>

#include "mitoscan/io.hpp"
#include "support/expect.hpp"
#include "support/oracles.hpp"

using namespace mitoscan;

namespace {

SlideRegistry one_slide() { return make_registry({SlideMeta{"s1", 10000, 8000, 0.25}}); }

}  // namespace

TEST(FoiShape, TenHpfAtQuarterMicron) {
  const auto s = foi_shape(2.37, 4, 3, 0.25);
  EXPECT_EQ(s.width_px, 7111);
  EXPECT_EQ(s.height_px, 5333);
  EXPECT_NEAR(s.pixel_area_mm2(), 2.3702, 1e-4);
  EXPECT_LT(std::abs(s.pixel_area_mm2() - 2.37) / 2.37, 1e-3);
}

TEST(FoiShape, UnitSquare) {
  const auto s = foi_shape(1.0, 1, 1, 1.0);
  EXPECT_EQ(s.width_px, 1000);
  EXPECT_EQ(s.height_px, 1000);
}

TEST(FoiShape, TransposedAspect) {
  const auto s = foi_shape(2.37, 3, 4, 0.25);
  EXPECT_EQ(s.width_px, 5333);
  EXPECT_EQ(s.height_px, 7111);
}

TEST(FoiShape, RejectsNonPositive) {
  EXPECT_EQ(code_of([] { foi_shape(0.0, 4, 3, 0.25); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { foi_shape(2.37, 0, 3, 0.25); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { foi_shape(2.37, 4, -3, 0.25); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { foi_shape(2.37, 4, 3, 0.0); }), ErrorCode::InvalidArgument);
}

TEST(FoiShape, MonotoneAndSymmetricProperties) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> area(0.05, 20.0), mpp(0.1, 2.0);
  std::uniform_int_distribution<int> asp(1, 9);
  for (int i = 0; i < 300; ++i) {
    const double a = area(gen), m = mpp(gen);
    const int p = asp(gen), q = asp(gen);
    const auto s = foi_shape(a, p, q, m);
    const auto t = foi_shape(a, q, p, m);
    EXPECT_EQ(s.width_px, t.height_px);
    EXPECT_EQ(s.height_px, t.width_px);
    const auto bigger = foi_shape(a * 1.01, p, q, m);
    EXPECT_GE(bigger.width_px, s.width_px);
    EXPECT_GE(bigger.height_px, s.height_px);
    EXPECT_LE(std::abs(static_cast<double>(s.width_px * q - s.height_px * p)), 0.5 * (p + q));
  }
}

TEST(Grade, Kiupel) {
  EXPECT_EQ(grade(7, kiupel_scheme()), "HighGrade");
  EXPECT_EQ(grade(6, kiupel_scheme()), "LowGrade");
  EXPECT_EQ(grade(0, kiupel_scheme()), "LowGrade");
}

TEST(Grade, ElstonEllis) {
  EXPECT_EQ(grade(15, elston_ellis_scheme()), "Moderate");
  EXPECT_EQ(grade(9, elston_ellis_scheme()), "Low");
  EXPECT_EQ(grade(10, elston_ellis_scheme()), "Moderate");
  EXPECT_EQ(grade(19, elston_ellis_scheme()), "Moderate");
  EXPECT_EQ(grade(20, elston_ellis_scheme()), "High");
}

TEST(Grade, TotalWithoutGaps) {
  for (const auto& scheme : {kiupel_scheme(), elston_ellis_scheme()}) {
    for (std::int64_t mc = 0; mc < 200; ++mc) {
      const auto a = grade_index(mc, scheme), b = grade_index(mc + 1, scheme);
      EXPECT_TRUE(b == a || b == a + 1);
      EXPECT_EQ(grade(mc, scheme), scheme.bands[a].label);
    }
  }
}

TEST(SlideMetaFile, OneRecord) {
  const auto metas = parse_slide_meta(R"([{"slide_id":"s1","width_px":10000,"height_px":8000,"mpp":0.25}])");
  ASSERT_EQ(metas.size(), 1u);
  EXPECT_EQ(make_registry(metas).size(), 1u);
  EXPECT_EQ(metas[0].width_px, 10000);
}

TEST(SlideMetaFile, MppZeroNamesField) {
  try {
    parse_slide_meta(R"([{"slide_id":"s1","width_px":10,"height_px":8,"mpp":0}])");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidField);
    EXPECT_NE(std::string(e.what()).find("field=mpp"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("slide_id=s1"), std::string::npos);
  }
}

TEST(SlideMetaFile, Errors) {
  EXPECT_EQ(code_of([] {
              parse_slide_meta(R"([{"slide_id":"s1","width_px":10,"height_px":8},
                                   {"slide_id":"s1","width_px":10,"height_px":8}])");
            }),
            ErrorCode::DuplicateSlide);
  EXPECT_EQ(code_of([] { parse_slide_meta("[{"); }), ErrorCode::MalformedFile);
  EXPECT_EQ(code_of([] { parse_slide_meta(R"({"slide_id":"s1"})"); }), ErrorCode::MalformedFile);
  EXPECT_EQ(code_of([] { parse_slide_meta(R"([{"slide_id":"s1","width_px":0,"height_px":8}])"); }),
            ErrorCode::InvalidField);
  EXPECT_EQ(code_of([] { parse_slide_meta(R"([{"slide_id":"s1","width_px":1.5,"height_px":8}])"); }),
            ErrorCode::InvalidField);
}

TEST(SlideMetaFile, DefaultMppAndRoundTrip) {
  const auto metas = parse_slide_meta(R"([{"slide_id":"a","width_px":3,"height_px":4}])");
  EXPECT_DOUBLE_EQ(metas[0].mpp, 0.25);
  const auto again = parse_slide_meta(serialize_slide_meta(metas));
  EXPECT_EQ(again[0].slide_id, "a");
  EXPECT_EQ(again[0].height_px, 4);
}

TEST(AnnotationFile, ThreeRowsSorted) {
  const auto map = parse_annotations(
      "slide_id,x_px,y_px,label\n"
      "s1,50.5,300,mitosis\n"
      "s1,10,20.25,hard_negative\n"
      "s1,5,300,mitosis\n",
      one_slide());
  const auto& set = map.at("s1");
  ASSERT_EQ(set.annotations.size(), 3u);
  EXPECT_DOUBLE_EQ(set.annotations[0].y_px, 20.25);
  EXPECT_DOUBLE_EQ(set.annotations[1].x_px, 5.0);
  EXPECT_DOUBLE_EQ(set.annotations[2].x_px, 50.5);
  EXPECT_TRUE(std::is_sorted(set.annotations.begin(), set.annotations.end(), canonical_less));
}

TEST(AnnotationFile, HalfOpenBoundWithRowNumber) {
  try {
    parse_annotations("slide_id,x_px,y_px,label\ns1,1,1,mitosis\ns1,10000,5,mitosis\n", one_slide());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutOfBounds);
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos);
  }
  EXPECT_NO_THROW(parse_annotations("slide_id,x_px,y_px,label\ns1,9999.99,7999.99,mitosis\n", one_slide()));
}

TEST(AnnotationFile, Errors) {
  EXPECT_EQ(code_of([] { parse_annotations("slide_id,x_px,y_px,label\ns1,1,1,candidate\n", one_slide()); }),
            ErrorCode::UnknownLabel);
  EXPECT_EQ(code_of([] { parse_annotations("slide_id,x_px,y_px,label\ns2,1,1,mitosis\n", one_slide()); }),
            ErrorCode::UnknownSlide);
  EXPECT_EQ(code_of([] { parse_annotations("slide_id,x_px,y_px,label\ns1,1,mitosis\n", one_slide()); }),
            ErrorCode::MalformedRow);
  EXPECT_EQ(code_of([] { parse_annotations("slide_id,x_px,y_px,label\ns1,abc,1,mitosis\n", one_slide()); }),
            ErrorCode::MalformedRow);
  EXPECT_EQ(code_of([] { parse_annotations("x,y\n", one_slide()); }), ErrorCode::MalformedRow);
  EXPECT_EQ(code_of([] { parse_annotations("slide_id,x_px,y_px,label\ns1,-0.5,1,mitosis\n", one_slide()); }),
            ErrorCode::OutOfBounds);
}

TEST(AnnotationFile, RoundTripIsBitExact) {
  std::mt19937_64 gen(5);
  auto set = oracle::random_set(gen, 10000, 8000, 400, 0.3);
  set.slide.slide_id = "s1";
  set.canonicalize();
  const auto back = parse_annotations(serialize_annotations(set), one_slide()).at("s1");
  ASSERT_EQ(back.annotations.size(), set.annotations.size());
  for (std::size_t i = 0; i < set.annotations.size(); ++i) EXPECT_EQ(back.annotations[i], set.annotations[i]);
  EXPECT_EQ(serialize_annotations(back), serialize_annotations(set));
}

TEST(AnnotationFile, OrderIndependentIngestion) {
  const std::string a = "slide_id,x_px,y_px,label\ns1,3,3,mitosis\ns1,1,1,hard_negative\ns1,1,1,mitosis\n";
  const std::string b = "slide_id,x_px,y_px,label\ns1,1,1,hard_negative\ns1,1,1,mitosis\ns1,3,3,mitosis\n";
  const auto sa = parse_annotations(a, one_slide()).at("s1");
  const auto sb = parse_annotations(b, one_slide()).at("s1");
  EXPECT_EQ(sa.annotations, sb.annotations);
  EXPECT_EQ(sa.annotations[0].label, Label::Mitosis);
}

TEST(Rect, HelpersAndDistance) {
  const RectPx r{10, 20, 100, 50};
  EXPECT_TRUE(r.contains(10, 20));
  EXPECT_FALSE(r.contains(110, 30));
  EXPECT_DOUBLE_EQ(r.center_x(), 60.0);
  EXPECT_DOUBLE_EQ(overlap_area(r, RectPx{60, 45, 100, 100}), 50.0 * 25.0);
  EXPECT_DOUBLE_EQ(overlap_area(r, RectPx{110, 20, 5, 5}), 0.0);
  EXPECT_DOUBLE_EQ(distance_to_boundary(r, 60, 45), 25.0);
  EXPECT_DOUBLE_EQ(distance_to_boundary(r, 113, 74), 5.0);
}
