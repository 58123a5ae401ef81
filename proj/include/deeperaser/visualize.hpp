#pragma once

#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace deeperaser {

/// Zero-padded frame file name, e.g. iter_01.png; at least two digits, more when total needs them.
inline std::string frame_name(const std::string& prefix, int k, int total) {
  const std::size_t width = std::max<std::size_t>(2, std::to_string(total).size());
  const std::string n = std::to_string(k);
  return prefix + std::string(width - std::min(width, n.size()), '0') + n + ".png";
}

/// Per-pixel channel mean of |l|, before normalization.
inline Eigen::ArrayXf latent_magnitude(const FeatureMap<float>& latent) {
  return latent.data.cwiseAbs().colwise().mean().transpose().array();
}

/// Latent magnitude min-max normalized to 0..255 per frame; a flat map becomes mid-gray 128.
inline Image8 latent_heatmap(const FeatureMap<float>& latent) {
  const Eigen::ArrayXf heat = latent_magnitude(latent);
  const float lo = heat.minCoeff(), hi = heat.maxCoeff();
  Image8 out(latent.height, latent.width, 1, 128);
  if (!(hi - lo > 1e-12f)) return out;
  for (Eigen::Index i = 0; i < heat.size(); ++i) {
    out.data[static_cast<std::size_t>(i)] =
        static_cast<std::uint8_t>(std::lround(255.0 * (heat[i] - lo) / static_cast<double>(hi - lo)));
  }
  return out;
}

}  // namespace deeperaser
