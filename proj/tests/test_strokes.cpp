#include "deeperaser/strokes.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace deeperaser;

namespace {

nlohmann::json load_fixtures() {
  std::ifstream f(std::filesystem::path(DEEPERASER_FIXTURE_DIR) / "stroke_fixtures.json");
  if (!f) throw std::runtime_error("missing stroke fixtures");
  return nlohmann::json::parse(f);
}

StrokeSet one(std::vector<StrokePoint> pts, double radius, int w, int h) {
  return StrokeSet{{Stroke{std::move(pts), radius}}, w, h};
}

}  // namespace

// Fixtures come from an exact rational brute-force oracle (tools/gen_stroke_fixtures.py).
TEST(RasterizeStrokes, MatchesExactOracleFixtures) {
  const auto fixtures = load_fixtures();
  ASSERT_GE(fixtures.size(), 20u);
  for (const auto& fx : fixtures) {
    const std::string name = fx.at("name");
    const StrokeSet set = strokes_from_json(fx.at("strokeset"));
    const Mask m = rasterize_strokes(set);
    EXPECT_EQ(m.popcount(), fx.at("popcount").get<std::size_t>()) << name;
    const auto& rows = fx.at("mask");
    ASSERT_EQ(static_cast<int>(rows.size()), m.height) << name;
    for (int y = 0; y < m.height; ++y) {
      const std::string row = rows[y];
      ASSERT_EQ(static_cast<int>(row.size()), m.width) << name;
      for (int x = 0; x < m.width; ++x) ASSERT_EQ(m.at(y, x), row[x] == '1' ? 1 : 0) << name << " " << x << "," << y;
    }
  }
}

TEST(RasterizeStrokes, SinglePointRadiusOneCoversCenterAndNeighbours) {
  const Mask m = rasterize_strokes(one({{5.5, 5.5}}, 1.0, 11, 11));
  EXPECT_GE(m.popcount(), 1u);
  EXPECT_LE(m.popcount(), 5u);
  EXPECT_EQ(m.popcount(), 5u);
  EXPECT_EQ(m.at(5, 5), 1);
  EXPECT_EQ(m.at(4, 5), 1);
  EXPECT_EQ(m.at(5, 6), 1);
  EXPECT_EQ(m.at(4, 4), 0);
}

TEST(RasterizeStrokes, EmptyListGivesZeroMask) {
  const Mask m = rasterize_strokes(StrokeSet{{}, 9, 4});
  EXPECT_EQ(m.height, 4);
  EXPECT_EQ(m.width, 9);
  EXPECT_TRUE(m.empty_mask());
}

TEST(RasterizeStrokes, HorizontalStrokeCoversEverySegmentCenter) {
  for (int len : {1, 4, 17}) {
    const Mask m = rasterize_strokes(one({{2.5, 6.5}, {2.5 + len, 6.5}}, 1.0, 30, 13));
    for (int x = 2; x <= 2 + len; ++x) EXPECT_EQ(m.at(6, x), 1) << len << " " << x;
    // rows at distance exactly 1 are included, distance 2 are not
    EXPECT_EQ(m.at(5, 2 + len / 2), 1);
    EXPECT_EQ(m.at(4, 2 + len / 2), 0);
  }
}

TEST(RasterizeStrokes, UnionOfStrokes) {
  StrokeSet set = one({{1.5, 1.5}}, 1.0, 10, 10);
  set.strokes.push_back(Stroke{{{8.5, 8.5}}, 1.0});
  const Mask a = rasterize_strokes(one({{1.5, 1.5}}, 1.0, 10, 10));
  const Mask b = rasterize_strokes(one({{8.5, 8.5}}, 1.0, 10, 10));
  const Mask u = rasterize_strokes(set);
  for (std::size_t i = 0; i < u.data.size(); ++i) EXPECT_EQ(u.data[i], a.data[i] | b.data[i]);
}

TEST(RasterizeStrokes, ValidationNamesTheStroke) {
  StrokeSet set = one({{1, 1}}, 1.0, 10, 10);
  set.strokes.push_back(Stroke{{{3, 3}, {10.5, 3}}, 2.0});
  try {
    rasterize_strokes(set);
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("stroke 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(rasterize_strokes(one({{1, 1}}, 0.5, 10, 10)), std::invalid_argument);
  EXPECT_THROW(rasterize_strokes(one({}, 1.0, 10, 10)), std::invalid_argument);
  EXPECT_THROW(rasterize_strokes(one({{-0.25, 1}}, 1.0, 10, 10)), std::invalid_argument);
  // the canvas edge itself is a valid coordinate
  EXPECT_NO_THROW(rasterize_strokes(one({{10, 10}}, 1.0, 10, 10)));
}

TEST(StrokeJson, RoundTripAndCanvasForms) {
  const StrokeSet set{{Stroke{{{1.25, 2.5}, {3, 4}}, 2.0}, Stroke{{{5, 5}}, 1.5}}, 12, 7};
  EXPECT_EQ(strokes_from_json(strokes_to_json(set)), set);
  const auto alt = strokes_from_json(nlohmann::json::parse(
      R"({"canvas": {"width": 12, "height": 7}, "strokes": [{"points": [[1, 1]]}]})"));
  EXPECT_EQ(alt.canvas_width, 12);
  EXPECT_EQ(alt.canvas_height, 7);
  EXPECT_EQ(alt.strokes[0].radius, 1.0);
  EXPECT_THROW(strokes_from_json(nlohmann::json::parse("[1, 2]")), std::invalid_argument);
  EXPECT_THROW(strokes_from_json(nlohmann::json::parse(R"({"strokes": []})")), std::invalid_argument);
  EXPECT_THROW(strokes_from_json(nlohmann::json::parse(R"({"canvas": [4, 4], "strokes": [{"points": [["a"]]}]})")),
               std::invalid_argument);
}
