#include "deeperaser/synth.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace deeperaser;

namespace {

TextInstance square(int id, double x0, double y0, double x1, double y1) {
  return TextInstance{id, {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, "AB", std::nullopt};
}

// Convex polygon membership by half-planes, boundary inclusive.
bool in_convex(Point p, const std::vector<Point>& poly) {
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point a = poly[i], b = poly[(i + 1) % poly.size()];
    const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    pos = pos || cross > 0;
    neg = neg || cross < 0;
  }
  return !(pos && neg);
}

}  // namespace

TEST(SelectInstances, RateOverTenThousandInstances) {
  std::vector<TextInstance> many;
  for (int i = 0; i < 10000; ++i) many.push_back(square(i, 0, 0, 1, 1));
  const double rate = static_cast<double>(select_instances(many, 0.4, 2024).size()) / 10000.0;
  EXPECT_GE(rate, 0.58);
  EXPECT_LE(rate, 0.62);
}

TEST(SelectInstances, ExtremesAndValidation) {
  std::vector<TextInstance> few{square(3, 0, 0, 1, 1), square(8, 2, 2, 3, 3)};
  EXPECT_EQ(select_instances(few, 0.0, 1), (std::set<int>{3, 8}));
  EXPECT_TRUE(select_instances(few, 1.0, 1).empty());
  EXPECT_THROW(select_instances(few, 1.5, 1), std::invalid_argument);
  EXPECT_THROW(select_instances(few, -0.1, 1), std::invalid_argument);
  EXPECT_EQ(select_instances(few, 0.4, 99), select_instances(few, 0.4, 99));
}

TEST(RasterizeMask, AxisAlignedRectangleCountsPixelCenters) {
  // centers (x + 0.5) in [2, 6] -> x = 2..5; (y + 0.5) in [3, 5] -> y = 3..4
  const Mask m = rasterize_mask({square(0, 2, 3, 6, 5)}, 10, 10);
  EXPECT_EQ(m.popcount(), 8u);
  EXPECT_EQ(m.at(3, 2), 1);
  EXPECT_EQ(m.at(4, 5), 1);
  EXPECT_EQ(m.at(5, 5), 0);
  // edges passing exactly through centers are included
  const Mask b = rasterize_mask({square(0, 2.5, 3.5, 5.5, 4.5)}, 10, 10);
  EXPECT_EQ(b.popcount(), 8u);
}

TEST(RasterizeMask, MatchesHalfPlaneOracleOnRandomConvexPolygons) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> q(0, 4 * 24);
  for (int trial = 0; trial < 60; ++trial) {
    // random triangle or rotated quad on a quarter-pixel grid
    std::vector<Point> poly;
    if (trial % 2 == 0) {
      for (int i = 0; i < 3; ++i) poly.push_back({q(rng) / 4.0, q(rng) / 4.0});
    } else {
      const Point c{8 + q(rng) / 16.0, 8 + q(rng) / 16.0};
      const double a = q(rng) / 8.0, b = q(rng) / 16.0 + 1;
      poly = {{c.x + a, c.y + b}, {c.x - b, c.y + a}, {c.x - a, c.y - b}, {c.x + b, c.y - a}};
    }
    const Mask m = rasterize_mask({TextInstance{0, poly, "X", std::nullopt}}, 24, 24);
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 24; ++x)
        ASSERT_EQ(m.at(y, x), in_convex({x + 0.5, y + 0.5}, poly) ? 1 : 0) << trial << " " << x << "," << y;
  }
}

TEST(RasterizeMask, ValuesAreBinaryAndClippedToImage) {
  const Mask m = rasterize_mask({square(0, -5, -5, 3, 3), square(1, 6, 6, 40, 40)}, 8, 8);
  for (auto v : m.data) EXPECT_TRUE(v == 0 || v == 1);
  EXPECT_EQ(m.popcount(), 9u + 4u);
}

TEST(RasterizeMask, DegeneratePolygonThrows) {
  EXPECT_THROW(rasterize_mask({TextInstance{0, {{0, 0}, {1, 1}}, "", std::nullopt}}, 4, 4), std::invalid_argument);
}

TEST(Dilate, MatchesChebyshevOracle) {
  Mask m(9, 9);
  m.at(4, 4) = 1;
  m.at(0, 8) = 1;
  const Mask d = dilate(m, 1);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) {
      const bool near = (std::abs(y - 4) <= 1 && std::abs(x - 4) <= 1) || (y <= 1 && x >= 7);
      EXPECT_EQ(d.at(y, x), near ? 1 : 0) << y << "," << x;
    }
  EXPECT_EQ(dilate(m, 0), m);
}

TEST(ComposePartialGt, SelectsPerPixel) {
  Image8 image(2, 2, 3, 200), clean(2, 2, 3, 50);
  Mask mask(2, 2);
  mask.at(0, 1) = 1;
  const Image8 out = compose_partial_gt(image, clean, mask);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x)
      for (int c = 0; c < 3; ++c) EXPECT_EQ(out.at(y, x, c), (y == 0 && x == 1) ? 50 : 200);
  EXPECT_THROW(compose_partial_gt(image, Image8(2, 3, 3), mask), std::invalid_argument);
}

TEST(SceneGenerator, DeterministicAndWellFormed) {
  SceneGenerator a(17), b(17);
  for (int i = 0; i < 20; ++i) {
    const SceneSample s = a.generate();
    const SceneSample t = b.generate();
    ASSERT_EQ(s.background, t.background);
    ASSERT_EQ(s.instances.size(), t.instances.size());
    EXPECT_GE(s.instances.size(), 1u);
    for (std::size_t k = 0; k < s.instances.size(); ++k) {
      const auto& inst = s.instances[k];
      EXPECT_EQ(inst.polygon, t.instances[k].polygon);
      ASSERT_TRUE(inst.render_params.has_value());
      for (auto ch : inst.render_params->color) {
        EXPECT_GE(ch, 10);
        EXPECT_LE(ch, 245);
      }
      for (const auto& p : inst.polygon) {
        EXPECT_GE(p.x, 0);
        EXPECT_LE(p.x, s.background.width);
        EXPECT_GE(p.y, 0);
        EXPECT_LE(p.y, s.background.height);
      }
    }
    // instance regions never overlap
    for (std::size_t p = 0; p < s.instances.size(); ++p)
      for (std::size_t q = p + 1; q < s.instances.size(); ++q) {
        const Mask mp = rasterize_mask({s.instances[p]}, 64, 64), mq = rasterize_mask({s.instances[q]}, 64, 64);
        for (std::size_t i = 0; i < mp.data.size(); ++i) ASSERT_FALSE(mp.data[i] && mq.data[i]);
      }
  }
}

TEST(RenderScene, TouchesOnlyPixelsInsideIncludedPolygons) {
  SceneGenerator gen(23);
  for (int i = 0; i < 10; ++i) {
    const SceneSample s = gen.generate();
    const Image8 full = render_scene(s, all_ids(s.instances));
    const Mask region = rasterize_mask(s.instances, 64, 64);
    bool any_ink = false;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        for (int c = 0; c < 3; ++c) {
          if (!region.at(y, x)) { ASSERT_EQ(full.at(y, x, c), s.background.at(y, x, c)); }
          any_ink = any_ink || full.at(y, x, c) != s.background.at(y, x, c);
        }
    EXPECT_TRUE(any_ink);
    EXPECT_EQ(render_scene(s, {}), s.background);
    EXPECT_THROW(render_scene(s, {999}), std::invalid_argument);
  }
}

TEST(MakeTriplet, InvariantsHold) {
  SceneGenerator gen(31);
  for (int i = 0; i < 25; ++i) {
    const SceneSample s = gen.generate();
    const Triplet t = make_triplet(s, 0.4, 1000 + i);
    const Triplet again = make_triplet(s, 0.4, 1000 + i);
    EXPECT_EQ(t.image, again.image);
    EXPECT_EQ(t.gt, again.gt);
    EXPECT_EQ(t.mask, again.mask);

    const std::set<int> selected = select_instances(s.instances, 0.4, 1000 + i);
    EXPECT_EQ(t.mask, rasterize_mask(subset(s.instances, selected), 64, 64));
    const Mask all = rasterize_mask(s.instances, 64, 64);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        for (int c = 0; c < 3; ++c) {
          if (!all.at(y, x)) { ASSERT_EQ(t.gt.at(y, x, c), t.image.at(y, x, c)); }
          if (t.mask.at(y, x)) { ASSERT_EQ(t.gt.at(y, x, c), s.background.at(y, x, c)); }
          if (t.preserved_mask->at(y, x)) { ASSERT_EQ(t.gt.at(y, x, c), t.image.at(y, x, c)); }
        }
    for (std::size_t p = 0; p < t.mask.data.size(); ++p) EXPECT_FALSE(t.mask.data[p] && t.preserved_mask->data[p]);
    // reselecting the same ids reproduces the triplet
    const Triplet r = reselect(t, selected);
    EXPECT_EQ(r.mask, t.mask);
    EXPECT_EQ(r.gt, t.gt);
  }
}

TEST(MakeTriplet, EmptySelectionGivesIdentityTarget) {
  SceneGenerator gen(5);
  const Triplet t = make_triplet(gen.generate(), 1.0, 3);
  EXPECT_TRUE(t.mask.empty_mask());
  EXPECT_EQ(t.gt, t.image);
}

TEST(SynthDataset, IdsAndNonEmptyOption) {
  const auto d = synth_dataset(12, 4, 0.4, SynthOptions{}, true);
  ASSERT_EQ(d.size(), 12u);
  EXPECT_EQ(d.front().id, "synth_0000");
  EXPECT_EQ(d.back().id, "synth_0011");
  for (const auto& t : d) EXPECT_FALSE(t.mask.empty_mask());
  const auto again = synth_dataset(12, 4, 0.4, SynthOptions{}, true);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d[i].image, again[i].image);
}
