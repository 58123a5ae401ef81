#pragma once

#include "config.hpp"
#include "layers.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace deeperaser {

template <class T>
struct ResidualBlock {
  Conv2d<T> conv1;
  Conv2d<T> conv2;
};

template <class T>
struct BackboneWeights {
  Conv2d<T> stem;
  std::vector<ResidualBlock<T>> blocks;
  Conv2d<T> context_head;
  Conv2d<T> latent_head;  // absent (zero-sized) when the erasing module is ablated
};

/// One erasing-module parameter set: feature extractor, gated updater, residual head.
template <class T>
struct ErasingWeights {
  Conv2d<T> image_conv1;
  Conv2d<T> image_conv2;
  Conv2d<T> projection;
  Conv2d<T> update_gate;     // W_x
  Conv2d<T> reset_gate;      // W_y
  Conv2d<T> candidate;       // W_r
  Conv2d<T> head_hidden;
  Conv2d<T> head_out;
};

/// Plain CNN prediction head placed directly behind the backbone (erasing-module ablation).
template <class T>
struct OutputHeadWeights {
  Conv2d<T> hidden;
  Conv2d<T> out;
};

/// Full parameter collection. With shared weights `erasing` holds exactly one set.
template <class T>
struct Weights {
  ModelConfig config;
  BackboneWeights<T> backbone;
  std::vector<ErasingWeights<T>> erasing;
  OutputHeadWeights<T> output_head;  // zero-sized unless config.erasing_module is false

  const ErasingWeights<T>& module_for_iteration(int k) const {
    return config.share_weights ? erasing.front() : erasing.at(static_cast<std::size_t>(k - 1));
  }
};

enum class ParamScope { all, backbone, erasing_module, output_head };

inline ParamScope parse_scope(const std::string& s) {
  if (s == "all") return ParamScope::all;
  if (s == "backbone") return ParamScope::backbone;
  if (s == "erasing_module") return ParamScope::erasing_module;
  if (s == "output_head") return ParamScope::output_head;
  throw std::invalid_argument("unknown parameter scope '" + s + "'");
}

/// Visits every convolution with its dotted name and scope, in a fixed order.
/// Works for const and mutable Weights.
template <class W, class Fn>
void for_each_conv(W& w, Fn&& fn) {
  const ModelConfig& cfg = w.config;
  fn(std::string("backbone.stem"), w.backbone.stem, ParamScope::backbone);
  for (std::size_t b = 0; b < w.backbone.blocks.size(); ++b) {
    const std::string p = "backbone.block" + std::to_string(b);
    fn(p + ".conv1", w.backbone.blocks[b].conv1, ParamScope::backbone);
    fn(p + ".conv2", w.backbone.blocks[b].conv2, ParamScope::backbone);
  }
  fn(std::string("backbone.context_head"), w.backbone.context_head, ParamScope::backbone);
  if (cfg.erasing_module) {
    fn(std::string("backbone.latent_head"), w.backbone.latent_head, ParamScope::backbone);
    for (std::size_t i = 0; i < w.erasing.size(); ++i) {
      const std::string p = cfg.share_weights ? std::string("erasing") : "erasing" + std::to_string(i);
      auto& e = w.erasing[i];
      if (cfg.use_prev_image) {
        fn(p + ".extractor.conv1", e.image_conv1, ParamScope::erasing_module);
        fn(p + ".extractor.conv2", e.image_conv2, ParamScope::erasing_module);
      }
      fn(p + ".extractor.projection", e.projection, ParamScope::erasing_module);
      fn(p + ".updater.update_gate", e.update_gate, ParamScope::erasing_module);
      fn(p + ".updater.reset_gate", e.reset_gate, ParamScope::erasing_module);
      fn(p + ".updater.candidate", e.candidate, ParamScope::erasing_module);
      fn(p + ".head.hidden", e.head_hidden, ParamScope::erasing_module);
      fn(p + ".head.out", e.head_out, ParamScope::erasing_module);
    }
  } else {
    fn(std::string("output_head.hidden"), w.output_head.hidden, ParamScope::output_head);
    fn(std::string("output_head.out"), w.output_head.out, ParamScope::output_head);
  }
}

/// Visits each named parameter tensor ("<conv>.weight", "<conv>.bias").
template <class W, class Fn>
void for_each_parameter(W& w, Fn&& fn) {
  for_each_conv(w, [&](const std::string& name, auto& conv, ParamScope scope) {
    fn(name + ".weight", conv.weight, scope);
    fn(name + ".bias", conv.bias, scope);
  });
}

/// Allocates zero-valued weights with the shapes implied by `config`.
template <class T>
Weights<T> make_zero_weights(const ModelConfig& config) {
  config.validate();
  Weights<T> w;
  w.config = config;
  const int k = config.kernel_size;
  const int width = config.backbone_width;
  const int d = config.latent_channels;
  w.backbone.stem = Conv2d<T>(4, width, k);
  w.backbone.blocks.resize(static_cast<std::size_t>(config.num_residual_blocks));
  for (auto& b : w.backbone.blocks) {
    b.conv1 = Conv2d<T>(width, width, k);
    b.conv2 = Conv2d<T>(width, width, k);
  }
  w.backbone.context_head = Conv2d<T>(width, d, config.backbone_head_kernel);
  if (config.erasing_module) {
    w.backbone.latent_head = Conv2d<T>(width, d, config.backbone_head_kernel);
    w.erasing.resize(static_cast<std::size_t>(config.erasing_sets()));
    for (auto& e : w.erasing) {
      if (config.use_prev_image) {
        e.image_conv1 = Conv2d<T>(3, config.extractor_mid, k);
        e.image_conv2 = Conv2d<T>(config.extractor_mid, config.extractor_out, k);
      }
      e.projection = Conv2d<T>(config.projection_in(), d, 1);
      e.update_gate = Conv2d<T>(2 * d, d, k);
      e.reset_gate = Conv2d<T>(2 * d, d, k);
      e.candidate = Conv2d<T>(2 * d, d, k);
      e.head_hidden = Conv2d<T>(d, config.head_hidden, k);
      e.head_out = Conv2d<T>(config.head_hidden, 3, k);
    }
  } else {
    w.output_head.hidden = Conv2d<T>(d, config.head_hidden, k);
    w.output_head.out = Conv2d<T>(config.head_hidden, 3, k);
  }
  return w;
}

/// Random initialization: kernels ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
/// Deterministic for a given (config, seed).
template <class T>
Weights<T> init_model(const ModelConfig& config, std::uint64_t seed) {
  Weights<T> w = make_zero_weights<T>(config);
  std::mt19937_64 rng(seed);
  for_each_conv(w, [&](const std::string&, Conv2d<T>& conv, ParamScope) {
    const double fan_in = static_cast<double>(conv.in_channels) * conv.kernel * conv.kernel;
    const double bound = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < conv.weight.size(); ++i) conv.weight.data()[i] = static_cast<T>(dist(rng));
    conv.bias.setZero();
  });
  return w;
}

template <class T>
std::size_t count_parameters(const Weights<T>& w, ParamScope scope) {
  std::size_t n = 0;
  for_each_conv(w, [&](const std::string&, const Conv2d<T>& conv, ParamScope s) {
    if (scope == ParamScope::all || scope == s) n += conv.parameter_count();
  });
  return n;
}

template <class T>
std::size_t count_parameters(const Weights<T>& w, const std::string& scope) {
  return count_parameters(w, parse_scope(scope));
}

template <class T>
void set_zero(Weights<T>& w) {
  for_each_conv(w, [](const std::string&, Conv2d<T>& conv, ParamScope) { conv.set_zero(); });
}

/// Zero-valued gradient buffer with the same layout as `w`.
template <class T>
Weights<T> zeros_like(const Weights<T>& w) {
  return make_zero_weights<T>(w.config);
}

template <class U, class T>
Weights<U> cast_weights(const Weights<T>& w) {
  Weights<U> out = make_zero_weights<U>(w.config);
  std::vector<const Conv2d<T>*> src;
  for_each_conv(w, [&](const std::string&, const Conv2d<T>& c, ParamScope) { src.push_back(&c); });
  std::size_t i = 0;
  for_each_conv(out, [&](const std::string&, Conv2d<U>& c, ParamScope) {
    c.weight = src[i]->weight.template cast<U>();
    c.bias = src[i]->bias.template cast<U>();
    ++i;
  });
  return out;
}

}  // namespace deeperaser
