#pragma once

#include "weights.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace deeperaser {

/// One-cycle schedule: linear warmup from base/25 to base over the first 30% of steps,
/// then cosine annealing down to base/1e4 at the last step.
struct OneCycle {
  static constexpr double warmup_fraction = 0.3;
  static constexpr double initial_div = 25.0;
  static constexpr double final_div = 1e4;
};

inline double lr_schedule(long step, long total_steps, double base_lr) {
  if (total_steps < 1 || step < 0 || step >= total_steps) {
    throw std::invalid_argument("lr_schedule: step " + std::to_string(step) + " outside [0, " +
                                std::to_string(total_steps) + ")");
  }
  const double start = base_lr / OneCycle::initial_div;
  const double end = base_lr / OneCycle::final_div;
  const double peak = OneCycle::warmup_fraction * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  if (s <= peak) {
    if (peak <= 0.0) return base_lr;
    return start + (base_lr - start) * (s / peak);
  }
  const double span = static_cast<double>(total_steps - 1) - peak;
  const double p = span > 0.0 ? std::min(1.0, (s - peak) / span) : 1.0;
  return end + (base_lr - end) * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
}

/// Adam with bias correction, betas (0.9, 0.999), no weight decay.
template <class T>
struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  Weights<T> first_moment;
  Weights<T> second_moment;

  Adam() = default;
  explicit Adam(const Weights<T>& like) : first_moment(zeros_like(like)), second_moment(zeros_like(like)) {}

  void update(Weights<T>& w, const Weights<T>& grad, double lr) {
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    std::vector<Conv2d<T>*> params, moments1, moments2;
    std::vector<const Conv2d<T>*> grads;
    for_each_conv(w, [&](const std::string&, Conv2d<T>& c, ParamScope) { params.push_back(&c); });
    for_each_conv(grad, [&](const std::string&, const Conv2d<T>& c, ParamScope) { grads.push_back(&c); });
    for_each_conv(first_moment, [&](const std::string&, Conv2d<T>& c, ParamScope) { moments1.push_back(&c); });
    for_each_conv(second_moment, [&](const std::string&, Conv2d<T>& c, ParamScope) { moments2.push_back(&c); });
    const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
    const T step_size = static_cast<T>(lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T e = static_cast<T>(eps);
    auto apply = [&](auto& p, const auto& g, auto& m, auto& v) {
      m.array() = b1 * m.array() + (T(1) - b1) * g.array();
      v.array() = b2 * v.array() + (T(1) - b2) * g.array().square();
      p.array() -= step_size * m.array() / ((v.array() * inv_c2).sqrt() + e);
    };
    for (std::size_t i = 0; i < params.size(); ++i) {
      apply(params[i]->weight, grads[i]->weight, moments1[i]->weight, moments2[i]->weight);
      apply(params[i]->bias, grads[i]->bias, moments1[i]->bias, moments2[i]->bias);
    }
  }
};

}  // namespace deeperaser
