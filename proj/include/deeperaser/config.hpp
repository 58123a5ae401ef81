#pragma once

#include <nlohmann/json.hpp>

#include <stdexcept>
#include <string>

namespace deeperaser {

enum class Prediction { residual, direct };

inline std::string to_string(Prediction p) { return p == Prediction::residual ? "residual" : "direct"; }

inline Prediction parse_prediction(const std::string& s) {
  if (s == "residual") return Prediction::residual;
  if (s == "direct") return Prediction::direct;
  throw std::invalid_argument("unknown prediction mode '" + s + "' (expected residual|direct)");
}

/// Architecture hyperparameters. The trailing flags select the ablated variants.
struct ModelConfig {
  int latent_channels = 64;  // D
  int backbone_width = 96;
  int num_residual_blocks = 6;
  int iterations = 8;  // K
  int kernel_size = 3;
  double leaky_slope = 0.2;

  int backbone_head_kernel = 1;  // the two parallel heads producing E_I and l_0
  int extractor_mid = 16;
  int extractor_out = 29;
  int head_hidden = 128;

  Prediction predict = Prediction::residual;
  bool use_context = true;
  bool use_prev_image = true;
  bool share_weights = true;
  bool erasing_module = true;

  /// Channels entering the 1x1 projection of the erasing feature extractor.
  int projection_in() const {
    int c = 0;
    if (use_prev_image) c += extractor_out + 3;
    if (use_context) c += latent_channels;
    return c;
  }

  /// Number of distinct erasing-module parameter sets.
  int erasing_sets() const { return erasing_module ? (share_weights ? 1 : iterations) : 0; }

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("ModelConfig: " + m); };
    if (latent_channels < 1) fail("latent_channels must be >= 1");
    if (iterations < 1) fail("iterations must be >= 1");
    if (kernel_size < 1 || kernel_size % 2 == 0) fail("kernel_size must be odd");
    if (backbone_head_kernel < 1 || backbone_head_kernel % 2 == 0) fail("backbone_head_kernel must be odd");
    if (backbone_width < 1 || num_residual_blocks < 0) fail("bad backbone shape");
    if (extractor_mid < 1 || extractor_out < 1 || head_hidden < 1) fail("bad erasing-module widths");
    if (erasing_module && !use_context && !use_prev_image) fail("erasing module needs context or previous image");
  }

  bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"latent_channels", c.latent_channels},
                     {"backbone_width", c.backbone_width},
                     {"num_residual_blocks", c.num_residual_blocks},
                     {"iterations", c.iterations},
                     {"kernel_size", c.kernel_size},
                     {"leaky_slope", c.leaky_slope},
                     {"backbone_head_kernel", c.backbone_head_kernel},
                     {"extractor_mid", c.extractor_mid},
                     {"extractor_out", c.extractor_out},
                     {"head_hidden", c.head_hidden},
                     {"predict", to_string(c.predict)},
                     {"use_context", c.use_context},
                     {"use_prev_image", c.use_prev_image},
                     {"share_weights", c.share_weights},
                     {"erasing_module", c.erasing_module}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.latent_channels = j.value("latent_channels", d.latent_channels);
  c.backbone_width = j.value("backbone_width", d.backbone_width);
  c.num_residual_blocks = j.value("num_residual_blocks", d.num_residual_blocks);
  c.iterations = j.value("iterations", d.iterations);
  c.kernel_size = j.value("kernel_size", d.kernel_size);
  c.leaky_slope = j.value("leaky_slope", d.leaky_slope);
  c.backbone_head_kernel = j.value("backbone_head_kernel", d.backbone_head_kernel);
  c.extractor_mid = j.value("extractor_mid", d.extractor_mid);
  c.extractor_out = j.value("extractor_out", d.extractor_out);
  c.head_hidden = j.value("head_hidden", d.head_hidden);
  c.predict = parse_prediction(j.value("predict", std::string("residual")));
  c.use_context = j.value("use_context", d.use_context);
  c.use_prev_image = j.value("use_prev_image", d.use_prev_image);
  c.share_weights = j.value("share_weights", d.share_weights);
  c.erasing_module = j.value("erasing_module", d.erasing_module);
}

}  // namespace deeperaser
