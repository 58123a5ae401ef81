#pragma once

// Image-quality metrics on 8-bit images (value domain 0..255).

#include "tensor.hpp"

#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace deeperaser {

namespace detail {

inline void require_same(const Image8& a, const Image8& b, const char* who) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(who) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
}

inline double gray(const Image8& im, int y, int x) {
  if (im.channels == 1) return im.at(y, x, 0);
  return 0.299 * im.at(y, x, 0) + 0.587 * im.at(y, x, 1) + 0.114 * im.at(y, x, 2);
}

inline double squared_error_mean(const Image8& a, const Image8& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

}  // namespace detail

inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();
inline constexpr double kPsnrCapDb = 100.0;
inline constexpr double kErrorThreshold = 20.0;

/// 10 log10(255^2 / MSE); +inf for identical images.
inline double psnr(const Image8& pred, const Image8& gt) {
  detail::require_same(pred, gt, "psnr");
  const double mse = detail::squared_error_mean(pred, gt);
  if (mse == 0.0) return kPsnrInfinity;
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

/// Mean squared error on the [0, 1] scale, multiplied by 100.
inline double mse_scaled(const Image8& pred, const Image8& gt) {
  detail::require_same(pred, gt, "mse");
  return 100.0 * detail::squared_error_mean(pred, gt) / (255.0 * 255.0);
}

/// Average absolute grayscale difference.
inline double age(const Image8& pred, const Image8& gt) {
  detail::require_same(pred, gt, "age");
  double acc = 0.0;
  for (int y = 0; y < pred.height; ++y)
    for (int x = 0; x < pred.width; ++x) acc += std::abs(detail::gray(pred, y, x) - detail::gray(gt, y, x));
  return acc / static_cast<double>(pred.pixels());
}

inline std::vector<std::uint8_t> error_pixels(const Image8& pred, const Image8& gt, double threshold) {
  std::vector<std::uint8_t> err(pred.pixels());
  for (int y = 0; y < pred.height; ++y)
    for (int x = 0; x < pred.width; ++x)
      err[static_cast<std::size_t>(y) * pred.width + x] =
          std::abs(detail::gray(pred, y, x) - detail::gray(gt, y, x)) > threshold;
  return err;
}

/// Fraction of pixels whose grayscale error exceeds `threshold`.
inline double peps(const Image8& pred, const Image8& gt, double threshold = kErrorThreshold) {
  detail::require_same(pred, gt, "peps");
  const auto err = error_pixels(pred, gt, threshold);
  return static_cast<double>(std::count(err.begin(), err.end(), std::uint8_t{1})) / static_cast<double>(err.size());
}

/// Fraction of error pixels whose four 4-neighbors are all error pixels. Border pixels never count.
inline double pceps(const Image8& pred, const Image8& gt, double threshold = kErrorThreshold) {
  detail::require_same(pred, gt, "pceps");
  const auto err = error_pixels(pred, gt, threshold);
  const int h = pred.height, w = pred.width;
  auto e = [&](int y, int x) { return err[static_cast<std::size_t>(y) * w + x] != 0; };
  std::size_t n = 0;
  for (int y = 1; y + 1 < h; ++y)
    for (int x = 1; x + 1 < w; ++x)
      if (e(y, x) && e(y - 1, x) && e(y + 1, x) && e(y, x - 1) && e(y, x + 1)) ++n;
  return static_cast<double>(n) / static_cast<double>(err.size());
}

// ---------------------------------------------------------------------------------------------
// Multi-scale SSIM

struct MssimOptions {
  static constexpr std::array<double, 5> kScaleWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  static constexpr int kWindow = 11;
  static constexpr double kSigma = 1.5;
  static constexpr double kK1 = 0.01;
  static constexpr double kK2 = 0.03;
  static constexpr double kRange = 255.0;
};

/// Scales used for an image whose smaller side is `min_dim`: the largest M <= 5 with
/// min_dim >= 11 * 2^(M-1), at least 1.
inline int mssim_scale_count(int min_dim) {
  int m = 1;
  while (m < 5 && min_dim >= MssimOptions::kWindow * (1 << m)) ++m;
  return m;
}

namespace detail {

using Plane = Matrix<double>;

inline std::vector<double> gaussian_window(int size) {
  std::vector<double> g(static_cast<std::size_t>(size));
  double sum = 0;
  const int c = size / 2;
  for (int i = 0; i < size; ++i) {
    g[static_cast<std::size_t>(i)] =
        std::exp(-((i - c) * (i - c)) / (2.0 * MssimOptions::kSigma * MssimOptions::kSigma));
    sum += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= sum;
  return g;
}

// Separable "valid" Gaussian filtering.
inline Plane filter_valid(const Plane& p, const std::vector<double>& g) {
  const int n = static_cast<int>(g.size());
  const int h = static_cast<int>(p.rows()), w = static_cast<int>(p.cols());
  Plane tmp(h, w - n + 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + n <= w; ++x) {
      double acc = 0;
      for (int i = 0; i < n; ++i) acc += g[static_cast<std::size_t>(i)] * p(y, x + i);
      tmp(y, x) = acc;
    }
  Plane out(h - n + 1, w - n + 1);
  for (int y = 0; y + n <= h; ++y)
    for (int x = 0; x < tmp.cols(); ++x) {
      double acc = 0;
      for (int i = 0; i < n; ++i) acc += g[static_cast<std::size_t>(i)] * tmp(y + i, x);
      out(y, x) = acc;
    }
  return out;
}

inline Plane downsample2(const Plane& p) {
  const Eigen::Index h = p.rows() / 2, w = p.cols() / 2;
  Plane out(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x)
      out(y, x) = 0.25 * (p(2 * y, 2 * x) + p(2 * y + 1, 2 * x) + p(2 * y, 2 * x + 1) + p(2 * y + 1, 2 * x + 1));
  return out;
}

// Mean SSIM and mean contrast-structure term for one plane pair.
inline std::pair<double, double> ssim_terms(const Plane& a, const Plane& b) {
  const int min_dim = static_cast<int>(std::min(a.rows(), a.cols()));
  int win = std::min(MssimOptions::kWindow, min_dim);
  if (win % 2 == 0) --win;
  const auto g = gaussian_window(win);
  const double c1 = std::pow(MssimOptions::kK1 * MssimOptions::kRange, 2);
  const double c2 = std::pow(MssimOptions::kK2 * MssimOptions::kRange, 2);
  const Plane mu_a = filter_valid(a, g), mu_b = filter_valid(b, g);
  const Plane aa = filter_valid(a.cwiseProduct(a), g);
  const Plane bb = filter_valid(b.cwiseProduct(b), g);
  const Plane ab = filter_valid(a.cwiseProduct(b), g);
  double ssim_sum = 0, cs_sum = 0;
  for (Eigen::Index i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a.data()[i], mb = mu_b.data()[i];
    const double va = aa.data()[i] - ma * ma, vb = bb.data()[i] - mb * mb, cov = ab.data()[i] - ma * mb;
    const double cs = (2 * cov + c2) / (va + vb + c2);
    const double lum = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    cs_sum += cs;
    ssim_sum += lum * cs;
  }
  const double n = static_cast<double>(mu_a.size());
  return {ssim_sum / n, cs_sum / n};
}

}  // namespace detail

/// Multi-scale SSIM in percent. Per channel: prod_{j<M} cs_j^w_j * ssim_M^w_M with negative
/// terms clamped to 0, then averaged over channels.
inline double mssim(const Image8& pred, const Image8& gt) {
  detail::require_same(pred, gt, "mssim");
  const int scales = mssim_scale_count(std::min(pred.height, pred.width));
  double wsum = 0;
  for (int j = 0; j < scales; ++j) wsum += MssimOptions::kScaleWeights[static_cast<std::size_t>(j)];
  double total = 0;
  for (int c = 0; c < pred.channels; ++c) {
    detail::Plane a(pred.height, pred.width), b(pred.height, pred.width);
    for (int y = 0; y < pred.height; ++y)
      for (int x = 0; x < pred.width; ++x) {
        a(y, x) = pred.at(y, x, c);
        b(y, x) = gt.at(y, x, c);
      }
    double value = 1.0;
    for (int j = 0; j < scales; ++j) {
      const double wj = MssimOptions::kScaleWeights[static_cast<std::size_t>(j)] / wsum;
      const auto [s, cs] = detail::ssim_terms(a, b);
      const double term = (j == scales - 1) ? s : cs;
      value *= std::pow(std::max(term, 0.0), wj);
      if (j + 1 < scales) {
        a = detail::downsample2(a);
        b = detail::downsample2(b);
      }
    }
    total += value;
  }
  return 100.0 * total / pred.channels;
}

// ---------------------------------------------------------------------------------------------

/// mask ? pred : input, per pixel.
inline Image8 composite_non_text(const Image8& pred, const Image8& input, const Mask& mask) {
  detail::require_same(pred, input, "composite_non_text");
  if (mask.height != pred.height || mask.width != pred.width) {
    throw std::invalid_argument("composite_non_text: mask size mismatch");
  }
  Image8 out = input;
  for (int y = 0; y < pred.height; ++y)
    for (int x = 0; x < pred.width; ++x)
      if (mask.at(y, x))
        for (int c = 0; c < pred.channels; ++c) out.at(y, x, c) = pred.at(y, x, c);
  return out;
}

struct MetricReport {
  double psnr = 0;   // dB, +inf when every pair is identical
  double mssim = 0;  // percent
  double mse = 0;    // [0,1]-scale MSE x 100
  double age = 0;    // gray levels
  double peps = 0;
  double pceps = 0;
  int n_images = 0;
  double psnr_cap_db = kPsnrCapDb;  // identical pairs enter dataset means at this value

  /// One "key: value" line per metric.
  std::string to_text() const {
    std::ostringstream s;
    s << std::setprecision(6) << std::fixed;
    s << "psnr: " << psnr << "\nmssim: " << mssim << "\nmse: " << mse << "\nage: " << age << "\npeps: " << peps
      << "\npceps: " << pceps << "\nn_images: " << n_images << "\npsnr_cap_db: " << psnr_cap_db << "\n";
    return s.str();
  }

  static std::string table_header() { return "PSNR,MSSIM,MSE,AGE,pEPs,pCEPS"; }

  std::string table_row() const {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << psnr << ',' << mssim << ',' << std::setprecision(4) << mse << ','
      << std::setprecision(2) << age << ',' << std::setprecision(4) << peps << ',' << pceps;
    return s.str();
  }
};

inline MetricReport image_metrics(const Image8& pred, const Image8& gt) {
  MetricReport r;
  r.psnr = psnr(pred, gt);
  r.mssim = mssim(pred, gt);
  r.mse = mse_scaled(pred, gt);
  r.age = age(pred, gt);
  r.peps = peps(pred, gt);
  r.pceps = pceps(pred, gt);
  r.n_images = 1;
  return r;
}

/// Unweighted mean of per-image reports. Infinite PSNRs enter at the cap unless all are infinite.
inline MetricReport average_reports(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("average_reports: no images");
  MetricReport out;
  const bool all_identical =
      std::all_of(reports.begin(), reports.end(), [](const MetricReport& r) { return std::isinf(r.psnr); });
  for (const auto& r : reports) {
    out.psnr += std::isinf(r.psnr) ? kPsnrCapDb : r.psnr;
    out.mssim += r.mssim;
    out.mse += r.mse;
    out.age += r.age;
    out.peps += r.peps;
    out.pceps += r.pceps;
  }
  const double n = static_cast<double>(reports.size());
  out.psnr = all_identical ? kPsnrInfinity : out.psnr / n;
  out.mssim /= n;
  out.mse /= n;
  out.age /= n;
  out.peps /= n;
  out.pceps /= n;
  out.n_images = static_cast<int>(reports.size());
  return out;
}

}  // namespace deeperaser
