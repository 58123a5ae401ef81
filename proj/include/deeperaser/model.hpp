#pragma once

#include "weights.hpp"

#include <optional>
#include <vector>

namespace deeperaser {

template <class T>
struct BackboneOutput {
  FeatureMap<T> context;         // E_I
  FeatureMap<T> initial_latent;  // l_0, tanh-squashed
};

/// Per-iteration recurrent state.
template <class T>
struct ErasingState {
  int k = 0;
  FeatureMap<T> prediction;  // I_k
  FeatureMap<T> latent;      // l_k
  FeatureMap<T> residual;    // r_k
};

// Activation caches kept by the training forward pass.

template <class T>
struct BackboneCache {
  FeatureMap<T> input;  // [I_0, M_0]
  FeatureMap<T> stem;
  struct Block {
    FeatureMap<T> in;
    FeatureMap<T> hidden;
    FeatureMap<T> out;
  };
  std::vector<Block> blocks;
};

template <class T>
struct ExtractorCache {
  FeatureMap<T> prev_image;
  FeatureMap<T> image_feat1;
  FeatureMap<T> image_feat2;
  FeatureMap<T> stacked;
};

template <class T>
struct UpdaterCache {
  FeatureMap<T> gate_input;  // [l_{k-1}, f]
  FeatureMap<T> update;      // x
  FeatureMap<T> reset;       // y
  FeatureMap<T> candidate_input;
  FeatureMap<T> candidate;   // tanh output
};

template <class T>
struct HeadCache {
  FeatureMap<T> pre;  // hidden pre-activation
  FeatureMap<T> act;
};

namespace detail {

template <class T>
void require_image_pair(const FeatureMap<T>& image, const FeatureMap<T>& mask) {
  if (image.channels() != 3) throw std::invalid_argument("expected a 3-channel image, got " + shape_string(image));
  if (mask.channels() != 1) throw std::invalid_argument("expected a 1-channel mask, got " + shape_string(mask));
  if (!image.same_spatial(mask)) {
    throw std::invalid_argument("image/mask spatial mismatch: " + shape_string(image) + " vs " + shape_string(mask));
  }
}

}  // namespace detail

/// Backbone: [I_0, M_0] -> stem -> residual blocks -> two parallel heads (E_I, tanh l_0).
/// No downsampling anywhere, so outputs keep the input resolution.
template <class T>
BackboneOutput<T> extract_features(const Weights<T>& w, const FeatureMap<T>& image, const FeatureMap<T>& mask,
                                   BackboneCache<T>* cache = nullptr) {
  detail::require_image_pair(image, mask);
  FeatureMap<T> input = concat_channels<T>({&image, &mask});
  FeatureMap<T> s = relu(conv_forward(w.backbone.stem, input));
  if (cache) {
    cache->input = input;
    cache->stem = s;
    cache->blocks.clear();
  }
  for (const auto& block : w.backbone.blocks) {
    FeatureMap<T> hidden = relu(conv_forward(block.conv1, s));
    FeatureMap<T> sum = conv_forward(block.conv2, hidden);
    sum.data += s.data;
    FeatureMap<T> out = relu(std::move(sum));
    if (cache) cache->blocks.push_back({s, hidden, out});
    s = std::move(out);
  }
  BackboneOutput<T> result;
  result.context = conv_forward(w.backbone.context_head, s);
  if (w.config.erasing_module) result.initial_latent = tanh_map(conv_forward(w.backbone.latent_head, s));
  return result;
}

/// f = 1x1 projection of [conv(conv(I_prev)), I_prev, E_I] (components dropped per config flags).
template <class T>
FeatureMap<T> erasing_feature_extract(const ErasingWeights<T>& m, const ModelConfig& cfg, const FeatureMap<T>& context,
                                      const FeatureMap<T>& prev_image, ExtractorCache<T>* cache = nullptr) {
  FeatureMap<T> stacked;
  FeatureMap<T> f1, f2;
  if (cfg.use_prev_image) {
    f1 = relu(conv_forward(m.image_conv1, prev_image));
    f2 = relu(conv_forward(m.image_conv2, f1));
    stacked = cfg.use_context ? concat_channels<T>({&f2, &prev_image, &context}) : concat_channels<T>({&f2, &prev_image});
  } else {
    stacked = context;
  }
  FeatureMap<T> f = conv_forward(m.projection, stacked);
  if (cache) {
    cache->prev_image = prev_image;
    cache->image_feat1 = std::move(f1);
    cache->image_feat2 = std::move(f2);
    cache->stacked = std::move(stacked);
  }
  return f;
}

/// Convolutional gated update:
///   x = sigmoid(conv([l, f]; W_x)), y = sigmoid(conv([l, f]; W_y)),
///   c = tanh(conv([y * l, f]; W_r)), l' = (1 - x) * l + x * c.
template <class T>
FeatureMap<T> gru_update(const ErasingWeights<T>& m, const FeatureMap<T>& prev_latent, const FeatureMap<T>& f,
                         UpdaterCache<T>* cache = nullptr) {
  if (!prev_latent.same_shape(f)) {
    throw std::invalid_argument("gru_update: latent " + shape_string(prev_latent) + " vs feature " + shape_string(f));
  }
  FeatureMap<T> gate_input = concat_channels<T>({&prev_latent, &f});
  FeatureMap<T> x = sigmoid(conv_forward(m.update_gate, gate_input));
  FeatureMap<T> y = sigmoid(conv_forward(m.reset_gate, gate_input));
  FeatureMap<T> gated(prev_latent.height, prev_latent.width, (y.data.array() * prev_latent.data.array()).matrix());
  FeatureMap<T> candidate_input = concat_channels<T>({&gated, &f});
  FeatureMap<T> c = tanh_map(conv_forward(m.candidate, candidate_input));
  FeatureMap<T> out(prev_latent.height, prev_latent.width,
                    ((T(1) - x.data.array()) * prev_latent.data.array() + x.data.array() * c.data.array()).matrix());
  if (cache) {
    cache->gate_input = std::move(gate_input);
    cache->update = std::move(x);
    cache->reset = std::move(y);
    cache->candidate_input = std::move(candidate_input);
    cache->candidate = std::move(c);
  }
  return out;
}

/// r = conv(LeakyReLU(conv(l))).
template <class T>
FeatureMap<T> residual_head(const Conv2d<T>& hidden, const Conv2d<T>& out, T slope, const FeatureMap<T>& latent,
                            HeadCache<T>* cache = nullptr) {
  FeatureMap<T> pre = conv_forward(hidden, latent);
  FeatureMap<T> act = leaky_relu(pre, slope);
  FeatureMap<T> r = conv_forward(out, act);
  if (cache) {
    cache->pre = std::move(pre);
    cache->act = std::move(act);
  }
  return r;
}

template <class T>
FeatureMap<T> residual_head(const ErasingWeights<T>& m, T slope, const FeatureMap<T>& latent,
                            HeadCache<T>* cache = nullptr) {
  return residual_head(m.head_hidden, m.head_out, slope, latent, cache);
}

/// I_k = clamp(I_0 + r_k, 0, 1). The anchor is always the original input.
template <class T>
FeatureMap<T> apply_residual(const FeatureMap<T>& original, const FeatureMap<T>& residual) {
  if (!original.same_shape(residual)) {
    throw std::invalid_argument("apply_residual: " + shape_string(original) + " vs " + shape_string(residual));
  }
  return FeatureMap<T>(original.height, original.width, (original.data + residual.data).cwiseMax(T(0)).cwiseMin(T(1)));
}

template <class T>
FeatureMap<T> clamp_unit(const FeatureMap<T>& m) {
  return FeatureMap<T>(m.height, m.width, m.data.cwiseMax(T(0)).cwiseMin(T(1)));
}

template <class T>
struct IterationCache {
  ExtractorCache<T> extractor;
  UpdaterCache<T> updater;
  HeadCache<T> head;
  FeatureMap<T> prev_latent;
  FeatureMap<T> latent;
  FeatureMap<T> unclamped;  // I_0 + r_k (or r_k for direct prediction) before clamping
};

/// Everything the backward pass needs from one forward run.
template <class T>
struct ForwardTape {
  BackboneCache<T> backbone;
  BackboneOutput<T> features;
  HeadCache<T> output_head;
  FeatureMap<T> output_unclamped;
  std::vector<IterationCache<T>> iterations;
};

template <class T>
struct ForwardResult {
  std::vector<FeatureMap<T>> predictions;  // I_1 .. I_K
  std::vector<FeatureMap<T>> latents;      // l_1 .. l_K, filled when requested
};

/// Runs the backbone once, then `iterations` applications of the erasing module.
/// With the erasing module ablated, a single prediction from the plain output head is returned.
template <class T>
ForwardResult<T> forward(const Weights<T>& w, const FeatureMap<T>& image, const FeatureMap<T>& mask, int iterations,
                         bool keep_latents = false, ForwardTape<T>* tape = nullptr) {
  if (iterations < 1) throw std::invalid_argument("forward: iterations must be >= 1");
  const ModelConfig& cfg = w.config;
  if (!cfg.share_weights && iterations > static_cast<int>(w.erasing.size()) && cfg.erasing_module) {
    throw std::invalid_argument("forward: unshared weights support at most " + std::to_string(w.erasing.size()) +
                                " iterations");
  }
  const T slope = static_cast<T>(cfg.leaky_slope);
  ForwardResult<T> result;
  BackboneOutput<T> feats = extract_features(w, image, mask, tape ? &tape->backbone : nullptr);

  if (!cfg.erasing_module) {
    HeadCache<T> hc;
    FeatureMap<T> r = residual_head(w.output_head.hidden, w.output_head.out, slope, feats.context, &hc);
    FeatureMap<T> unclamped = r;
    if (cfg.predict == Prediction::residual) unclamped.data += image.data;
    result.predictions.push_back(clamp_unit(unclamped));
    if (tape) {
      tape->output_head = std::move(hc);
      tape->output_unclamped = std::move(unclamped);
      tape->features = std::move(feats);
    }
    return result;
  }

  FeatureMap<T> latent = feats.initial_latent;
  FeatureMap<T> current = image;
  if (tape) tape->iterations.clear();
  for (int k = 1; k <= iterations; ++k) {
    const ErasingWeights<T>& m = w.module_for_iteration(k);
    IterationCache<T>* ic = nullptr;
    if (tape) {
      tape->iterations.emplace_back();
      ic = &tape->iterations.back();
      ic->prev_latent = latent;
    }
    FeatureMap<T> f = erasing_feature_extract(m, cfg, feats.context, current, ic ? &ic->extractor : nullptr);
    latent = gru_update(m, latent, f, ic ? &ic->updater : nullptr);
    FeatureMap<T> r = residual_head(m, slope, latent, ic ? &ic->head : nullptr);
    FeatureMap<T> unclamped = r;
    if (cfg.predict == Prediction::residual) unclamped.data += image.data;
    current = clamp_unit(unclamped);
    if (ic) {
      ic->latent = latent;
      ic->unclamped = std::move(unclamped);
    }
    result.predictions.push_back(current);
    if (keep_latents) result.latents.push_back(latent);
  }
  if (tape) tape->features = std::move(feats);
  return result;
}

/// Convenience: the final prediction only.
template <class T>
FeatureMap<T> erase(const Weights<T>& w, const FeatureMap<T>& image, const FeatureMap<T>& mask, int iterations) {
  return forward(w, image, mask, iterations).predictions.back();
}

namespace detail {

// d(clamp(u, 0, 1))/du, inclusive at the bounds.
template <class T>
FeatureMap<T> clamp_backward(const FeatureMap<T>& unclamped, FeatureMap<T> grad) {
  grad.data = (unclamped.data.array() >= T(0) && unclamped.data.array() <= T(1)).select(grad.data, T(0));
  return grad;
}

template <class T>
FeatureMap<T> head_backward(const Conv2d<T>& hidden, const Conv2d<T>& out, Conv2d<T>& g_hidden, Conv2d<T>& g_out,
                            T slope, const FeatureMap<T>& input, const HeadCache<T>& hc, const FeatureMap<T>& grad_r) {
  FeatureMap<T> g_act = conv_backward(out, hc.act, grad_r, g_out);
  FeatureMap<T> g_pre = leaky_relu_backward(hc.pre, std::move(g_act), slope);
  return conv_backward(hidden, input, g_pre, g_hidden);
}

template <class T>
void backbone_backward(const Weights<T>& w, const BackboneCache<T>& cache, const BackboneOutput<T>& feats,
                       const FeatureMap<T>& grad_context, const FeatureMap<T>* grad_initial_latent, Weights<T>& grad) {
  const FeatureMap<T>& top = cache.blocks.empty() ? cache.stem : cache.blocks.back().out;
  FeatureMap<T> g = conv_backward(w.backbone.context_head, top, grad_context, grad.backbone.context_head);
  if (grad_initial_latent) {
    FeatureMap<T> g_pre = tanh_backward(feats.initial_latent, *grad_initial_latent);
    g.data += conv_backward(w.backbone.latent_head, top, g_pre, grad.backbone.latent_head).data;
  }
  for (int b = static_cast<int>(cache.blocks.size()) - 1; b >= 0; --b) {
    const auto& bc = cache.blocks[static_cast<std::size_t>(b)];
    const auto& bw = w.backbone.blocks[static_cast<std::size_t>(b)];
    auto& bg = grad.backbone.blocks[static_cast<std::size_t>(b)];
    FeatureMap<T> g_sum = relu_backward(bc.out, std::move(g));
    FeatureMap<T> g_hidden = conv_backward(bw.conv2, bc.hidden, g_sum, bg.conv2);
    g_hidden = relu_backward(bc.hidden, std::move(g_hidden));
    FeatureMap<T> g_in = conv_backward(bw.conv1, bc.in, g_hidden, bg.conv1);
    g_in.data += g_sum.data;
    g = std::move(g_in);
  }
  FeatureMap<T> g_stem = relu_backward(cache.stem, std::move(g));
  conv_backward(w.backbone.stem, cache.input, g_stem, grad.backbone.stem);
}

}  // namespace detail

/// Backpropagates per-prediction gradients dL/dI_k through the full recurrence (no truncation)
/// and accumulates parameter gradients into `grad`.
template <class T>
void backward(const Weights<T>& w, const ForwardTape<T>& tape, const std::vector<FeatureMap<T>>& grad_predictions,
              Weights<T>& grad) {
  const ModelConfig& cfg = w.config;
  const T slope = static_cast<T>(cfg.leaky_slope);
  const FeatureMap<T>& context = tape.features.context;

  if (!cfg.erasing_module) {
    FeatureMap<T> g_r = detail::clamp_backward(tape.output_unclamped, grad_predictions.at(0));
    FeatureMap<T> g_ctx = detail::head_backward(w.output_head.hidden, w.output_head.out, grad.output_head.hidden,
                                                grad.output_head.out, slope, context, tape.output_head, g_r);
    detail::backbone_backward(w, tape.backbone, tape.features, g_ctx, static_cast<const FeatureMap<T>*>(nullptr),
                              grad);
    return;
  }

  const int K = static_cast<int>(tape.iterations.size());
  if (static_cast<int>(grad_predictions.size()) != K) throw std::invalid_argument("backward: gradient count mismatch");
  const int d = cfg.latent_channels;
  const int h = context.height, wd = context.width;

  FeatureMap<T> g_context(context.channels(), h, wd);
  FeatureMap<T> g_latent(d, h, wd);
  FeatureMap<T> g_image_carry(3, h, wd);  // dL/dI_k arriving from iteration k+1

  for (int k = K; k >= 1; --k) {
    const IterationCache<T>& ic = tape.iterations[static_cast<std::size_t>(k - 1)];
    const ErasingWeights<T>& m = w.module_for_iteration(k);
    ErasingWeights<T>& gm = cfg.share_weights ? grad.erasing.front() : grad.erasing[static_cast<std::size_t>(k - 1)];

    FeatureMap<T> g_pred = grad_predictions[static_cast<std::size_t>(k - 1)];
    g_pred.data += g_image_carry.data;
    FeatureMap<T> g_r = detail::clamp_backward(ic.unclamped, std::move(g_pred));

    FeatureMap<T> g_l = detail::head_backward(m.head_hidden, m.head_out, gm.head_hidden, gm.head_out, slope, ic.latent,
                                              ic.head, g_r);
    g_l.data += g_latent.data;

    // gated update
    const auto& uc = ic.updater;
    const auto x = uc.update.data.array();
    const auto c = uc.candidate.data.array();
    const auto lp = ic.prev_latent.data.array();
    FeatureMap<T> g_lp(h, wd, (g_l.data.array() * (T(1) - x)).matrix());
    FeatureMap<T> g_x(h, wd, (g_l.data.array() * (c - lp)).matrix());
    FeatureMap<T> g_c(h, wd, (g_l.data.array() * x).matrix());

    FeatureMap<T> g_cz = tanh_backward(uc.candidate, std::move(g_c));
    FeatureMap<T> g_cin = conv_backward(m.candidate, uc.candidate_input, g_cz, gm.candidate);
    const auto g_gated = g_cin.data.topRows(d).array();
    FeatureMap<T> g_f(h, wd, g_cin.data.bottomRows(d));
    FeatureMap<T> g_y(h, wd, (g_gated * lp).matrix());
    g_lp.data.array() += g_gated * uc.reset.data.array();

    FeatureMap<T> g_xz = sigmoid_backward(uc.update, std::move(g_x));
    FeatureMap<T> g_yz = sigmoid_backward(uc.reset, std::move(g_y));
    FeatureMap<T> g_gate_in = conv_backward(m.update_gate, uc.gate_input, g_xz, gm.update_gate);
    g_gate_in.data += conv_backward(m.reset_gate, uc.gate_input, g_yz, gm.reset_gate).data;
    g_lp.data += g_gate_in.data.topRows(d);
    g_f.data += g_gate_in.data.bottomRows(d);

    // feature extractor
    const auto& ec = ic.extractor;
    FeatureMap<T> g_stacked = conv_backward(m.projection, ec.stacked, g_f, gm.projection);
    FeatureMap<T> g_prev_image(3, h, wd);
    if (cfg.use_prev_image) {
      const int c2 = cfg.extractor_out;
      FeatureMap<T> g_f2 = relu_backward(ec.image_feat2, slice_channels(g_stacked, 0, c2));
      FeatureMap<T> g_f1 = conv_backward(m.image_conv2, ec.image_feat1, g_f2, gm.image_conv2);
      g_f1 = relu_backward(ec.image_feat1, std::move(g_f1));
      g_prev_image = conv_backward(m.image_conv1, ec.prev_image, g_f1, gm.image_conv1);
      g_prev_image.data += g_stacked.data.middleRows(c2, 3);
      if (cfg.use_context) g_context.data += g_stacked.data.middleRows(c2 + 3, d);
    } else {
      g_context.data += g_stacked.data;
    }
    g_image_carry = std::move(g_prev_image);  // I_0 is an input when k == 1; its gradient is dropped
    g_latent = std::move(g_lp);
  }
  detail::backbone_backward(w, tape.backbone, tape.features, g_context, &g_latent, grad);
}

}  // namespace deeperaser
