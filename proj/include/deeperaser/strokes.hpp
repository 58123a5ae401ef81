#pragma once

#include "tensor.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace deeperaser {

// Brush strokes drawn over an image, the wire form of a hand-drawn mask.
//
// Rasterization rule (shared with the browser preview): pixel (c, r) is set when its center
// (c + 0.5, r + 0.5) lies within distance `radius` (inclusive) of any segment of any stroke's
// polyline. A one-point stroke is a disk. Coordinates are continuous pixel units with the
// origin at the top-left image corner.

struct StrokePoint {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const StrokePoint&) const = default;
};

struct Stroke {
  std::vector<StrokePoint> points;
  double radius = 1.0;
  bool operator==(const Stroke&) const = default;
};

struct StrokeSet {
  std::vector<Stroke> strokes;
  int canvas_width = 0;
  int canvas_height = 0;
  bool operator==(const StrokeSet&) const = default;
};

/// Checks every point lies inside [0, W] x [0, H] and every radius is >= 1.
inline void validate_strokes(const StrokeSet& set, int width, int height) {
  for (std::size_t i = 0; i < set.strokes.size(); ++i) {
    const Stroke& s = set.strokes[i];
    const std::string where = "stroke " + std::to_string(i);
    if (s.points.empty()) throw std::invalid_argument(where + ": no points");
    if (!(s.radius >= 1.0) || !std::isfinite(s.radius)) {
      throw std::invalid_argument(where + ": radius must be >= 1");
    }
    for (std::size_t j = 0; j < s.points.size(); ++j) {
      const StrokePoint p = s.points[j];
      if (!(p.x >= 0.0 && p.x <= width && p.y >= 0.0 && p.y <= height)) {
        throw std::invalid_argument(where + ": point " + std::to_string(j) + " (" + std::to_string(p.x) + ", " +
                                    std::to_string(p.y) + ") outside " + std::to_string(width) + "x" +
                                    std::to_string(height) + " canvas");
      }
    }
  }
}

/// True when p is within distance r of segment ab (inclusive). Uses only products and sums of
/// the inputs, so the answer is exact whenever coordinates and radius are dyadic (e.g. multiples
/// of 1/4) of moderate size; the browser preview evaluates the same expressions.
inline bool within_segment(double px, double py, StrokePoint a, StrokePoint b, double r) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double ax = px - a.x, ay = py - a.y;
  const double r2 = r * r;
  const double len2 = dx * dx + dy * dy;
  const double dot = ax * dx + ay * dy;
  if (len2 == 0.0 || dot <= 0.0) return ax * ax + ay * ay <= r2;
  if (dot >= len2) {
    const double bx = px - b.x, by = py - b.y;
    return bx * bx + by * by <= r2;
  }
  const double cross = ax * dy - ay * dx;
  return cross * cross <= r2 * len2;
}

inline Mask rasterize_strokes(const StrokeSet& set, int width, int height) {
  if (width < 1 || height < 1) throw std::invalid_argument("rasterize_strokes: empty canvas");
  validate_strokes(set, width, height);
  Mask m(height, width);
  for (const Stroke& s : set.strokes) {
    const double r = s.radius;
    const std::size_t n = s.points.size();
    for (std::size_t j = 0; j < std::max<std::size_t>(1, n - 1); ++j) {
      const StrokePoint a = s.points[j];
      const StrokePoint b = n > 1 ? s.points[j + 1] : a;
      const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - r - 0.5)));
      const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + r - 0.5)));
      const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - r - 0.5)));
      const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + r - 0.5)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
          if (within_segment(x + 0.5, y + 0.5, a, b, r)) m.at(y, x) = 1;
    }
  }
  return m;
}

/// Uses the stroke set's own canvas size.
inline Mask rasterize_strokes(const StrokeSet& set) { return rasterize_strokes(set, set.canvas_width, set.canvas_height); }

// JSON wire format: {"canvas": [W, H], "strokes": [{"points": [[x, y], ...], "radius": r}, ...]}

inline nlohmann::json strokes_to_json(const StrokeSet& set) {
  nlohmann::json strokes = nlohmann::json::array();
  for (const auto& s : set.strokes) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : s.points) pts.push_back({p.x, p.y});
    strokes.push_back({{"points", pts}, {"radius", s.radius}});
  }
  return {{"canvas", {set.canvas_width, set.canvas_height}}, {"strokes", strokes}};
}

inline StrokeSet strokes_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("StrokeSet must be a JSON object");
  StrokeSet set;
  try {
    const auto& canvas = j.at("canvas");
    if (canvas.is_array()) {
      set.canvas_width = canvas.at(0).get<int>();
      set.canvas_height = canvas.at(1).get<int>();
    } else {
      set.canvas_width = canvas.at("width").get<int>();
      set.canvas_height = canvas.at("height").get<int>();
    }
    for (const auto& js : j.at("strokes")) {
      Stroke s;
      s.radius = js.value("radius", 1.0);
      for (const auto& p : js.at("points")) s.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      set.strokes.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed StrokeSet: ") + e.what());
  }
  return set;
}

}  // namespace deeperaser
