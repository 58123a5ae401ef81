#pragma once

#include "font5x7.hpp"
#include "tensor.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace deeperaser {

/// Pixel coordinate, x = column, y = row. Pixel (c, r) has its center at (c + 0.5, r + 0.5).
struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

struct RenderParams {
  int font_px = 14;  // glyph cell height; the 5x7 font is scaled by font_px / 7
  std::array<std::uint8_t, 3> color{0, 0, 0};
  double rotation_deg = 0.0;
};

struct TextInstance {
  int id = 0;
  std::vector<Point> polygon;
  std::string text;
  std::optional<RenderParams> render_params;  // present for synthetic instances only
};

struct SceneSample {
  Image8 background;
  std::vector<TextInstance> instances;
};

struct Triplet {
  std::string id;
  Image8 image;   // I_0
  Mask mask;      // M_0, 1 = erase
  Image8 gt;      // I_gt for this mask
  std::optional<Mask> preserved_mask;
  std::uint64_t seed = 0;
  // Provenance: every annotated instance and the all-text-removed image, when known.
  std::vector<TextInstance> instances;
  std::optional<Image8> gt_all_removed;
};

// ---------------------------------------------------------------------------------------------
// Geometry

inline bool point_on_segment(Point p, Point a, Point b, double eps = 1e-9) {
  const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  if (std::abs(cross) > eps * std::max(1.0, len)) return false;
  return p.x >= std::min(a.x, b.x) - eps && p.x <= std::max(a.x, b.x) + eps && p.y >= std::min(a.y, b.y) - eps &&
         p.y <= std::max(a.y, b.y) + eps;
}

/// Inside-or-on-boundary test (even-odd rule for the interior).
inline bool point_in_polygon(Point p, const std::vector<Point>& poly) {
  const std::size_t n = poly.size();
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point a = poly[i], b = poly[j];
    if (point_on_segment(p, a, b)) return true;
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xc = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < xc) inside = !inside;
    }
  }
  return inside;
}

struct PixelBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive pixel range
};

/// Pixels whose centers could lie in the polygon, clipped to the image.
inline PixelBox candidate_pixels(const std::vector<Point>& poly, int height, int width) {
  double minx = poly.front().x, maxx = minx, miny = poly.front().y, maxy = miny;
  for (const auto& p : poly) {
    minx = std::min(minx, p.x);
    maxx = std::max(maxx, p.x);
    miny = std::min(miny, p.y);
    maxy = std::max(maxy, p.y);
  }
  PixelBox b;
  b.x0 = std::max(0, static_cast<int>(std::floor(minx - 0.5)));
  b.y0 = std::max(0, static_cast<int>(std::floor(miny - 0.5)));
  b.x1 = std::min(width - 1, static_cast<int>(std::ceil(maxx - 0.5)));
  b.y1 = std::min(height - 1, static_cast<int>(std::ceil(maxy - 0.5)));
  return b;
}

inline void validate_polygon(const TextInstance& inst) {
  if (inst.polygon.size() < 3) {
    throw std::invalid_argument("instance " + std::to_string(inst.id) + ": polygon needs at least 3 vertices");
  }
}

/// Pixel = 1 iff its center lies inside (or on the boundary of) any polygon.
inline Mask rasterize_mask(const std::vector<TextInstance>& instances, int height, int width) {
  Mask m(height, width, 0);
  for (const auto& inst : instances) {
    validate_polygon(inst);
    const PixelBox b = candidate_pixels(inst.polygon, height, width);
    for (int y = b.y0; y <= b.y1; ++y)
      for (int x = b.x0; x <= b.x1; ++x)
        if (point_in_polygon({x + 0.5, y + 0.5}, inst.polygon)) m.at(y, x) = 1;
  }
  return m;
}

/// Binary dilation with a (2r+1) x (2r+1) square.
inline Mask dilate(const Mask& m, int radius) {
  if (radius <= 0) return m;
  Mask out(m.height, m.width, 0);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      for (int yy = std::max(0, y - radius); yy <= std::min(m.height - 1, y + radius); ++yy)
        for (int xx = std::max(0, x - radius); xx <= std::min(m.width - 1, x + radius); ++xx) out.at(yy, xx) = 1;
    }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Text layout and rendering

namespace detail {

struct TextBox {
  double width = 0, height = 0, scale = 1, pad = 1;
};

inline TextBox text_box(const std::string& text, int font_px) {
  TextBox b;
  b.scale = std::max(1.0, font_px / static_cast<double>(font::kGlyphHeight));
  const double n = static_cast<double>(text.size());
  b.width = (n * (font::kGlyphWidth + 1) - 1) * b.scale + 2 * b.pad;
  b.height = font::kGlyphHeight * b.scale + 2 * b.pad;
  return b;
}

inline Point centroid(const std::vector<Point>& poly) {
  Point c;
  for (const auto& p : poly) {
    c.x += p.x;
    c.y += p.y;
  }
  c.x /= static_cast<double>(poly.size());
  c.y /= static_cast<double>(poly.size());
  return c;
}

/// Ink coverage in [0, 1] at image point p for a text laid out around `center`.
inline double coverage(const std::string& text, const TextBox& box, Point center, double cos_t, double sin_t, Point p) {
  constexpr int kSub = 3;
  int hits = 0;
  for (int sy = 0; sy < kSub; ++sy)
    for (int sx = 0; sx < kSub; ++sx) {
      const double dx = p.x + (sx + 0.5) / kSub - 0.5 - center.x;
      const double dy = p.y + (sy + 0.5) / kSub - 0.5 - center.y;
      // inverse rotation into the text frame
      const double u = cos_t * dx + sin_t * dy + box.width / 2 - box.pad;
      const double v = -sin_t * dx + cos_t * dy + box.height / 2 - box.pad;
      if (u < 0 || v < 0) continue;
      const int col = static_cast<int>(std::floor(u / box.scale));
      const int row = static_cast<int>(std::floor(v / box.scale));
      const int ch = col / (font::kGlyphWidth + 1);
      const int gc = col % (font::kGlyphWidth + 1);
      if (ch >= static_cast<int>(text.size())) continue;
      if (font::ink(text[static_cast<std::size_t>(ch)], row, gc)) ++hits;
    }
  return hits / static_cast<double>(kSub * kSub);
}

}  // namespace detail

/// Rotated rectangle enclosing `text` at `center`, vertices in clockwise image order.
inline std::vector<Point> text_polygon(const std::string& text, int font_px, double rotation_deg, Point center) {
  const detail::TextBox b = detail::text_box(text, font_px);
  const double t = rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(t), s = std::sin(t);
  const double hw = b.width / 2, hh = b.height / 2;
  const std::array<Point, 4> local{{{-hw, -hh}, {hw, -hh}, {hw, hh}, {-hw, hh}}};
  std::vector<Point> poly;
  for (const auto& q : local) poly.push_back({center.x + c * q.x - s * q.y, center.y + s * q.x + c * q.y});
  return poly;
}

/// Draws one instance into `canvas`; only pixels whose centers lie in the polygon are touched.
inline void render_instance(Image8& canvas, const TextInstance& inst) {
  if (!inst.render_params) {
    throw std::invalid_argument("instance " + std::to_string(inst.id) + " has no render parameters");
  }
  const RenderParams& rp = *inst.render_params;
  const detail::TextBox box = detail::text_box(inst.text, rp.font_px);
  const Point center = detail::centroid(inst.polygon);
  const double t = rp.rotation_deg * std::numbers::pi / 180.0;
  const double ct = std::cos(t), st = std::sin(t);
  const PixelBox b = candidate_pixels(inst.polygon, canvas.height, canvas.width);
  for (int y = b.y0; y <= b.y1; ++y)
    for (int x = b.x0; x <= b.x1; ++x) {
      if (!point_in_polygon({x + 0.5, y + 0.5}, inst.polygon)) continue;
      const double a = detail::coverage(inst.text, box, center, ct, st, {x + 0.5, y + 0.5});
      if (a <= 0.0) continue;
      for (int c = 0; c < canvas.channels; ++c) {
        const double v = (1.0 - a) * canvas.at(y, x, c) + a * rp.color[static_cast<std::size_t>(c % 3)];
        canvas.at(y, x, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
}

/// Background with exactly the instances listed in `include` drawn on top.
inline Image8 render_scene(const SceneSample& sample, const std::set<int>& include) {
  for (int id : include) {
    const bool known = std::any_of(sample.instances.begin(), sample.instances.end(),
                                   [id](const TextInstance& t) { return t.id == id; });
    if (!known) throw std::invalid_argument("render_scene: unknown instance id " + std::to_string(id));
  }
  Image8 out = sample.background;
  for (const auto& inst : sample.instances)
    if (include.count(inst.id)) render_instance(out, inst);
  return out;
}

inline std::set<int> all_ids(const std::vector<TextInstance>& instances) {
  std::set<int> ids;
  for (const auto& i : instances) ids.insert(i.id);
  return ids;
}

inline std::vector<TextInstance> subset(const std::vector<TextInstance>& instances, const std::set<int>& ids) {
  std::vector<TextInstance> out;
  for (const auto& i : instances)
    if (ids.count(i.id)) out.push_back(i);
  return out;
}

/// Uniform double in [0, 1) with 53 random bits; identical on every platform.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Each instance is independently excluded from erasure with probability `alpha`.
inline std::set<int> select_instances(const std::vector<TextInstance>& instances, double alpha, std::uint64_t seed) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("select_instances: alpha must be in [0, 1]");
  std::mt19937_64 rng(seed);
  std::set<int> kept;
  for (const auto& inst : instances)
    if (unit_uniform(rng) >= alpha) kept.insert(inst.id);
  return kept;
}

/// output = mask ? gt_all_removed : image, per pixel.
inline Image8 compose_partial_gt(const Image8& image, const Image8& gt_all_removed, const Mask& mask) {
  if (!image.same_shape(gt_all_removed) || image.height != mask.height || image.width != mask.width) {
    throw std::invalid_argument("compose_partial_gt: shape mismatch " + shape_string(image) + ", " +
                                shape_string(gt_all_removed) + ", mask " + std::to_string(mask.height) + "x" +
                                std::to_string(mask.width));
  }
  Image8 out = image;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      if (mask.at(y, x))
        for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = gt_all_removed.at(y, x, c);
  return out;
}

/// image = all instances, gt = unselected only, mask = selected, preserved_mask = unselected.
inline Triplet make_triplet(const SceneSample& sample, double alpha, std::uint64_t seed) {
  const std::set<int> selected = select_instances(sample.instances, alpha, seed);
  std::set<int> unselected;
  for (const auto& inst : sample.instances)
    if (!selected.count(inst.id)) unselected.insert(inst.id);
  const int h = sample.background.height, w = sample.background.width;
  Triplet t;
  t.image = render_scene(sample, all_ids(sample.instances));
  t.gt = render_scene(sample, unselected);
  t.mask = rasterize_mask(subset(sample.instances, selected), h, w);
  t.preserved_mask = rasterize_mask(subset(sample.instances, unselected), h, w);
  t.seed = seed;
  t.instances = sample.instances;
  t.gt_all_removed = sample.background;
  return t;
}

/// Re-derives mask and gt for a new instance selection (requires the all-removed image).
inline Triplet reselect(const Triplet& base, const std::set<int>& selected) {
  if (!base.gt_all_removed) throw std::invalid_argument("reselect: triplet has no all-text-removed image");
  std::set<int> unselected;
  for (const auto& inst : base.instances)
    if (!selected.count(inst.id)) unselected.insert(inst.id);
  Triplet t = base;
  t.mask = rasterize_mask(subset(base.instances, selected), base.image.height, base.image.width);
  t.preserved_mask = rasterize_mask(subset(base.instances, unselected), base.image.height, base.image.width);
  t.gt = compose_partial_gt(base.image, *base.gt_all_removed, t.mask);
  return t;
}

// ---------------------------------------------------------------------------------------------
// Procedural scene generator

struct SynthOptions {
  int height = 64;
  int width = 64;
  int min_instances = 2;
  int max_instances = 6;
  int min_chars = 2;
  int max_chars = 5;
  std::vector<int> font_px{10, 14};
  double max_rotation_deg = 12.0;
  double noise_amplitude = 10.0;  // low-frequency texture, gray levels
  double grain = 1.5;             // per-pixel noise std, gray levels
  int placement_attempts = 40;
};

/// Seeded scene generator. Not thread-safe; use one instance per thread.
class SceneGenerator {
 public:
  explicit SceneGenerator(std::uint64_t seed, SynthOptions opts = {}) : rng_(seed), opts_(std::move(opts)) {}

  /// Optional texture pool; when non-empty, backgrounds are random crops (tiled) from it.
  void set_textures(std::vector<Image8> textures) { textures_ = std::move(textures); }

  const SynthOptions& options() const { return opts_; }

  SceneSample generate() {
    SceneSample s;
    s.background = textures_.empty() ? procedural_background() : texture_background();
    const int lo = std::max(1, opts_.min_instances), hi = std::max(lo, opts_.max_instances);
    const int target = lo + static_cast<int>(rng_() % static_cast<std::uint64_t>(hi - lo + 1));
    int next_id = 0;
    for (int attempt = 0; attempt < opts_.placement_attempts && static_cast<int>(s.instances.size()) < target;
         ++attempt) {
      auto inst = propose(s.background, next_id);
      if (!inst) continue;
      const auto box = bounds(inst->polygon);
      bool clash = false;
      for (const auto& other : s.instances) {
        const auto ob = bounds(other.polygon);
        // keep at least one pixel of clearance between axis-aligned bounds
        if (box[0] < ob[2] + 1 && ob[0] < box[2] + 1 && box[1] < ob[3] + 1 && ob[1] < box[3] + 1) {
          clash = true;
          break;
        }
      }
      if (clash) continue;
      s.instances.push_back(std::move(*inst));
      ++next_id;
    }
    return s;
  }

 private:
  static std::array<double, 4> bounds(const std::vector<Point>& poly) {
    std::array<double, 4> b{poly[0].x, poly[0].y, poly[0].x, poly[0].y};
    for (const auto& p : poly) {
      b[0] = std::min(b[0], p.x);
      b[1] = std::min(b[1], p.y);
      b[2] = std::max(b[2], p.x);
      b[3] = std::max(b[3], p.y);
    }
    return b;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit_uniform(rng_); }
  int uniform_int(int lo, int hi) { return lo + static_cast<int>(rng_() % static_cast<std::uint64_t>(hi - lo + 1)); }
  double normal() {
    // Box-Muller on platform-independent uniforms.
    const double u1 = std::max(unit_uniform(rng_), 1e-300);
    const double u2 = unit_uniform(rng_);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  Image8 procedural_background() {
    const int h = opts_.height, w = opts_.width;
    Image8 bg(h, w, 3);
    std::array<double, 3> c0{}, c1{};
    for (int c = 0; c < 3; ++c) {
      c0[static_cast<std::size_t>(c)] = uniform(40, 215);
      c1[static_cast<std::size_t>(c)] = std::clamp(c0[static_cast<std::size_t>(c)] + uniform(-60, 60), 30.0, 225.0);
    }
    const double angle = uniform(0, 2 * std::numbers::pi);
    const double gx = std::cos(angle), gy = std::sin(angle);
    const double extent = std::abs(gx) * w + std::abs(gy) * h;
    // coarse value-noise lattice, bilinearly interpolated
    constexpr int kCell = 16;
    const int gh = h / kCell + 2, gw = w / kCell + 2;
    std::vector<double> lattice(static_cast<std::size_t>(gh * gw * 3));
    for (auto& v : lattice) v = uniform(-1, 1) * opts_.noise_amplitude;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double proj = ((x - w / 2.0) * gx + (y - h / 2.0) * gy) / std::max(1.0, extent) + 0.5;
        const double fy = y / static_cast<double>(kCell), fx = x / static_cast<double>(kCell);
        const int iy = static_cast<int>(fy), ix = static_cast<int>(fx);
        const double ty = fy - iy, tx = fx - ix;
        for (int c = 0; c < 3; ++c) {
          auto L = [&](int yy, int xx) { return lattice[static_cast<std::size_t>((yy * gw + xx) * 3 + c)]; };
          const double n = (1 - ty) * ((1 - tx) * L(iy, ix) + tx * L(iy, ix + 1)) +
                           ty * ((1 - tx) * L(iy + 1, ix) + tx * L(iy + 1, ix + 1));
          const double base = c0[static_cast<std::size_t>(c)] +
                              (c1[static_cast<std::size_t>(c)] - c0[static_cast<std::size_t>(c)]) * proj;
          const double v = base + n + opts_.grain * normal();
          bg.at(y, x, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
        }
      }
    return bg;
  }

  Image8 texture_background() {
    const Image8& tex = textures_[rng_() % textures_.size()];
    Image8 bg(opts_.height, opts_.width, 3);
    const int oy = uniform_int(0, tex.height - 1), ox = uniform_int(0, tex.width - 1);
    for (int y = 0; y < bg.height; ++y)
      for (int x = 0; x < bg.width; ++x)
        for (int c = 0; c < 3; ++c)
          bg.at(y, x, c) = tex.at((oy + y) % tex.height, (ox + x) % tex.width, tex.channels == 3 ? c : 0);
    return bg;
  }

  std::optional<TextInstance> propose(const Image8& bg, int id) {
    TextInstance inst;
    inst.id = id;
    const int n = uniform_int(opts_.min_chars, opts_.max_chars);
    for (int i = 0; i < n; ++i)
      inst.text += font::kAlphabet[static_cast<std::size_t>(uniform_int(0, static_cast<int>(font::kAlphabet.size()) - 1))];
    RenderParams rp;
    rp.font_px = opts_.font_px[static_cast<std::size_t>(uniform_int(0, static_cast<int>(opts_.font_px.size()) - 1))];
    rp.rotation_deg = uniform(-opts_.max_rotation_deg, opts_.max_rotation_deg);
    const double max_w = std::min(opts_.width, opts_.height) - 4.0;
    while (inst.text.size() > 1 && detail::text_box(inst.text, rp.font_px).width >= max_w) inst.text.pop_back();
    const detail::TextBox fitted = detail::text_box(inst.text, rp.font_px);
    const double hw = fitted.width / 2 + 1, hh = fitted.height / 2 + 1;
    if (2 * hw >= opts_.width || 2 * hh >= opts_.height) return std::nullopt;
    const Point center{uniform(hw, opts_.width - hw), uniform(hh, opts_.height - hh)};
    inst.polygon = text_polygon(inst.text, rp.font_px, rp.rotation_deg, center);
    for (const auto& p : inst.polygon)
      if (p.x < 0 || p.y < 0 || p.x > opts_.width || p.y > opts_.height) return std::nullopt;
    // text color well separated from the local background luminance
    double lum = 0;
    const Point c = detail::centroid(inst.polygon);
    for (int ch = 0; ch < 3; ++ch)
      lum += bg.at(std::clamp(static_cast<int>(c.y), 0, bg.height - 1), std::clamp(static_cast<int>(c.x), 0, bg.width - 1), ch);
    lum /= 3.0;
    const double target = lum > 128 ? uniform(15, std::max(16.0, lum - 90)) : uniform(std::min(239.0, lum + 90), 240);
    for (int ch = 0; ch < 3; ++ch)
      rp.color[static_cast<std::size_t>(ch)] =
          static_cast<std::uint8_t>(std::lround(std::clamp(target + uniform(-25, 25), 10.0, 245.0)));
    inst.render_params = rp;
    return inst;
  }

  std::mt19937_64 rng_;
  SynthOptions opts_;
  std::vector<Image8> textures_;
};

/// `count` partial-mask triplets with ids "synth_0000", ... from one generator stream.
/// With `nonempty_mask`, scenes whose selection erases nothing are skipped.
inline std::vector<Triplet> synth_dataset(int count, std::uint64_t seed, double alpha, SynthOptions opts = {},
                                          bool nonempty_mask = false) {
  SceneGenerator gen(seed, std::move(opts));
  std::vector<Triplet> out;
  out.reserve(static_cast<std::size_t>(std::max(0, count)));
  std::uint64_t draw = 0;
  while (static_cast<int>(out.size()) < count) {
    Triplet t = make_triplet(gen.generate(), alpha, seed * 1000003ull + draw++);
    if (nonempty_mask && t.mask.empty_mask()) continue;
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04d", static_cast<int>(out.size()));
    t.id = id;
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace deeperaser
