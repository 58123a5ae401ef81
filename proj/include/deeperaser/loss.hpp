#pragma once

#include "tensor.hpp"

#include <cmath>
#include <vector>

namespace deeperaser {

struct LossReport {
  double total = 0.0;
  std::vector<double> per_iteration;  // unweighted mean |I_gt - I_k|
  long step = 0;
  double lr = 0.0;
};

/// Weight of iteration k (1-based) out of K: lambda^(K-k).
inline double iteration_weight(int k, int K, double lambda) { return std::pow(lambda, K - k); }

/// Weighted total from per-iteration distances (index 0 is iteration 1).
inline double combine_iteration_losses(const std::vector<double>& distances, double lambda, bool final_only = false) {
  if (!(lambda > 0.0)) throw std::invalid_argument("weighted_l1_loss: lambda must be > 0");
  const int K = static_cast<int>(distances.size());
  if (final_only) return K > 0 ? distances.back() : 0.0;
  double total = 0.0;
  for (int k = 1; k <= K; ++k) total += iteration_weight(k, K, lambda) * distances[static_cast<std::size_t>(k - 1)];
  return total;
}

/// Sum over iterations of lambda^(K-k) * mean|I_gt - I_k|.
/// With `final_only`, only the last iteration contributes (weight 1).
template <class T>
LossReport weighted_l1_loss(const std::vector<FeatureMap<T>>& predictions, const FeatureMap<T>& gt, double lambda,
                            bool final_only = false) {
  if (!(lambda > 0.0)) throw std::invalid_argument("weighted_l1_loss: lambda must be > 0");
  if (predictions.empty()) throw std::invalid_argument("weighted_l1_loss: no predictions");
  const int K = static_cast<int>(predictions.size());
  LossReport report;
  for (int k = 1; k <= K; ++k) {
    const auto& p = predictions[static_cast<std::size_t>(k - 1)];
    if (!p.same_shape(gt)) throw std::invalid_argument("weighted_l1_loss: shape mismatch " + shape_string(p));
    const double dist = static_cast<double>((gt.data - p.data).cwiseAbs().sum()) / static_cast<double>(gt.data.size());
    report.per_iteration.push_back(dist);
  }
  report.total = combine_iteration_losses(report.per_iteration, lambda, final_only);
  return report;
}

/// Gradient of weighted_l1_loss w.r.t. each prediction, scaled by `scale`. sign(0) = 0.
template <class T>
std::vector<FeatureMap<T>> weighted_l1_gradient(const std::vector<FeatureMap<T>>& predictions, const FeatureMap<T>& gt,
                                                double lambda, bool final_only = false, double scale = 1.0) {
  const int K = static_cast<int>(predictions.size());
  const double n = static_cast<double>(gt.data.size());
  std::vector<FeatureMap<T>> grads;
  grads.reserve(predictions.size());
  for (int k = 1; k <= K; ++k) {
    const auto& p = predictions[static_cast<std::size_t>(k - 1)];
    double weight = final_only ? (k == K ? 1.0 : 0.0) : iteration_weight(k, K, lambda);
    const T c = static_cast<T>(weight * scale / n);
    FeatureMap<T> g(p.height, p.width, Matrix<T>());
    g.data = (p.data - gt.data).unaryExpr([c](T v) { return v > T(0) ? c : (v < T(0) ? -c : T(0)); });
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace deeperaser
