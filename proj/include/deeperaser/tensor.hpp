#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace deeperaser {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Planar feature map. Row c of `data` holds channel c in row-major pixel order.
template <class T>
struct FeatureMap {
  int height = 0;
  int width = 0;
  Matrix<T> data;

  FeatureMap() = default;
  FeatureMap(int channels, int h, int w) : height(h), width(w), data(Matrix<T>::Zero(channels, h * w)) {}
  FeatureMap(int h, int w, Matrix<T> d) : height(h), width(w), data(std::move(d)) {}

  int channels() const { return static_cast<int>(data.rows()); }
  int pixels() const { return height * width; }

  T& at(int c, int y, int x) { return data(c, y * width + x); }
  T at(int c, int y, int x) const { return data(c, y * width + x); }

  bool same_spatial(const FeatureMap& o) const { return height == o.height && width == o.width; }
  bool same_shape(const FeatureMap& o) const { return same_spatial(o) && channels() == o.channels(); }

  template <class U>
  FeatureMap<U> cast() const {
    return FeatureMap<U>(height, width, data.template cast<U>());
  }
};

inline std::string shape_string(int c, int h, int w) {
  return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
}

template <class T>
std::string shape_string(const FeatureMap<T>& m) {
  return shape_string(m.channels(), m.height, m.width);
}

/// Stacks feature maps along the channel axis.
template <class T>
FeatureMap<T> concat_channels(std::initializer_list<const FeatureMap<T>*> parts) {
  int rows = 0;
  const FeatureMap<T>* first = *parts.begin();
  for (const auto* p : parts) {
    if (!p->same_spatial(*first)) {
      throw std::invalid_argument("concat_channels: spatial mismatch " + shape_string(*p) + " vs " +
                                  shape_string(*first));
    }
    rows += p->channels();
  }
  FeatureMap<T> out(rows, first->height, first->width);
  int r = 0;
  for (const auto* p : parts) {
    out.data.middleRows(r, p->channels()) = p->data;
    r += p->channels();
  }
  return out;
}

template <class T>
FeatureMap<T> slice_channels(const FeatureMap<T>& m, int begin, int count) {
  return FeatureMap<T>(m.height, m.width, m.data.middleRows(begin, count));
}

/// Interleaved 8-bit image (HWC), the on-disk representation.
struct Image8 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;

  Image8() = default;
  Image8(int h, int w, int c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

  std::uint8_t& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  std::uint8_t at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  bool same_shape(const Image8& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool operator==(const Image8&) const = default;
};

inline std::string shape_string(const Image8& im) { return shape_string(im.channels, im.height, im.width); }

/// Binary mask with values in {0, 1}.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t popcount() const {
    return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
  }
  bool empty_mask() const { return popcount() == 0; }
  bool operator==(const Mask&) const = default;
};

/// 8-bit image to [0, 1] planar map.
template <class T>
FeatureMap<T> to_feature_map(const Image8& im) {
  FeatureMap<T> out(im.channels, im.height, im.width);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      for (int c = 0; c < im.channels; ++c) out.at(c, y, x) = static_cast<T>(im.at(y, x, c)) / T(255);
  return out;
}

template <class T>
FeatureMap<T> to_feature_map(const Mask& m) {
  FeatureMap<T> out(1, m.height, m.width);
  for (std::size_t i = 0; i < m.data.size(); ++i) out.data(0, static_cast<Eigen::Index>(i)) = T(m.data[i]);
  return out;
}

/// [0, 1] planar map to 8-bit; values are clamped then rounded to nearest.
template <class T>
Image8 to_image8(const FeatureMap<T>& m) {
  Image8 out(m.height, m.width, m.channels());
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      for (int c = 0; c < m.channels(); ++c) {
        const double v = std::clamp(static_cast<double>(m.at(c, y, x)), 0.0, 1.0);
        out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return out;
}

}  // namespace deeperaser
