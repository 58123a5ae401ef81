#pragma once

#include "checkpoint.hpp"
#include "image_io.hpp"
#include "loss.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "optim.hpp"
#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace deeperaser {

enum class Supervision { all_iterations, final_only };
enum class MaskMode { part, all, none };

inline std::string to_string(Supervision s) { return s == Supervision::all_iterations ? "all_iterations" : "final_only"; }
inline std::string to_string(MaskMode m) {
  switch (m) {
    case MaskMode::part: return "part";
    case MaskMode::all: return "all";
    case MaskMode::none: return "none";
  }
  return "part";
}

/// Training hyperparameters plus the architecture knobs exercised by the ablations.
/// Config files use exactly these field names as flat `key = value` lines.
struct TrainConfig {
  double base_lr = 1e-4;
  int epochs = 1;
  int batch_size = 2;
  int crop = 256;
  double lambda = 0.85;
  int K = 8;
  double alpha = 0.4;
  std::uint64_t seed = 0;
  Supervision supervise = Supervision::all_iterations;
  Prediction predict = Prediction::residual;
  bool use_context = true;
  bool use_prev_image = true;
  bool share_weights = true;
  MaskMode mask_mode = MaskMode::part;
  bool resample_masks = true;  // redraw part masks every epoch when annotations allow

  // architecture size
  int latent_channels = 64;
  int backbone_width = 96;
  int num_residual_blocks = 6;
  int head_hidden = 128;
  int extractor_mid = 16;
  int extractor_out = 29;
  bool erasing_module = true;

  ModelConfig model_config() const {
    ModelConfig m;
    m.latent_channels = latent_channels;
    m.backbone_width = backbone_width;
    m.num_residual_blocks = num_residual_blocks;
    m.iterations = K;
    m.head_hidden = head_hidden;
    m.extractor_mid = extractor_mid;
    m.extractor_out = extractor_out;
    m.predict = predict;
    m.use_context = use_context;
    m.use_prev_image = use_prev_image;
    m.share_weights = share_weights;
    m.erasing_module = erasing_module;
    return m;
  }

  void validate() const {
    if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("TrainConfig: lambda must be in (0, 1]");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("TrainConfig: alpha must be in [0, 1]");
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (crop < 1) throw std::invalid_argument("TrainConfig: crop must be >= 1");
    if (K < 1) throw std::invalid_argument("TrainConfig: K must be >= 1");
    if (!(base_lr > 0.0)) throw std::invalid_argument("TrainConfig: base_lr must be > 0");
    model_config().validate();
  }

  /// Field name -> setter; the single source of truth for config-file keys.
  static const std::map<std::string, std::function<void(TrainConfig&, const std::string&)>>& setters() {
    static const std::map<std::string, std::function<void(TrainConfig&, const std::string&)>> table = [] {
      std::map<std::string, std::function<void(TrainConfig&, const std::string&)>> t;
      auto as_bool = [](const std::string& v) {
        if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "off" || v == "no") return false;
        throw std::invalid_argument("expected a boolean, got '" + v + "'");
      };
      t["base_lr"] = [](TrainConfig& c, const std::string& v) { c.base_lr = std::stod(v); };
      t["epochs"] = [](TrainConfig& c, const std::string& v) { c.epochs = std::stoi(v); };
      t["batch_size"] = [](TrainConfig& c, const std::string& v) { c.batch_size = std::stoi(v); };
      t["crop"] = [](TrainConfig& c, const std::string& v) { c.crop = std::stoi(v); };
      t["lambda"] = [](TrainConfig& c, const std::string& v) { c.lambda = std::stod(v); };
      t["K"] = [](TrainConfig& c, const std::string& v) { c.K = std::stoi(v); };
      t["alpha"] = [](TrainConfig& c, const std::string& v) { c.alpha = std::stod(v); };
      t["seed"] = [](TrainConfig& c, const std::string& v) { c.seed = std::stoull(v); };
      t["supervise"] = [](TrainConfig& c, const std::string& v) {
        if (v == "all_iterations") c.supervise = Supervision::all_iterations;
        else if (v == "final_only") c.supervise = Supervision::final_only;
        else throw std::invalid_argument("supervise must be all_iterations|final_only");
      };
      t["predict"] = [](TrainConfig& c, const std::string& v) { c.predict = parse_prediction(v); };
      t["use_context"] = [as_bool](TrainConfig& c, const std::string& v) { c.use_context = as_bool(v); };
      t["use_prev_image"] = [as_bool](TrainConfig& c, const std::string& v) { c.use_prev_image = as_bool(v); };
      t["share_weights"] = [as_bool](TrainConfig& c, const std::string& v) { c.share_weights = as_bool(v); };
      t["mask_mode"] = [](TrainConfig& c, const std::string& v) {
        if (v == "part") c.mask_mode = MaskMode::part;
        else if (v == "all") c.mask_mode = MaskMode::all;
        else if (v == "none") c.mask_mode = MaskMode::none;
        else throw std::invalid_argument("mask_mode must be part|all|none");
      };
      t["resample_masks"] = [as_bool](TrainConfig& c, const std::string& v) { c.resample_masks = as_bool(v); };
      t["latent_channels"] = [](TrainConfig& c, const std::string& v) { c.latent_channels = std::stoi(v); };
      t["backbone_width"] = [](TrainConfig& c, const std::string& v) { c.backbone_width = std::stoi(v); };
      t["num_residual_blocks"] = [](TrainConfig& c, const std::string& v) { c.num_residual_blocks = std::stoi(v); };
      t["head_hidden"] = [](TrainConfig& c, const std::string& v) { c.head_hidden = std::stoi(v); };
      t["extractor_mid"] = [](TrainConfig& c, const std::string& v) { c.extractor_mid = std::stoi(v); };
      t["extractor_out"] = [](TrainConfig& c, const std::string& v) { c.extractor_out = std::stoi(v); };
      t["erasing_module"] = [as_bool](TrainConfig& c, const std::string& v) { c.erasing_module = as_bool(v); };
      return t;
    }();
    return table;
  }

  void set(const std::string& key, const std::string& value) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw std::invalid_argument("unknown config key '" + key + "'");
    try {
      it->second(*this, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config key '" + key + "': " + e.what());
    } catch (const std::out_of_range&) {
      throw std::invalid_argument("config key '" + key + "': value out of range");
    }
  }

  std::string to_text() const {
    std::ostringstream s;
    s << std::setprecision(17);
    s << "base_lr = " << base_lr << "\nepochs = " << epochs << "\nbatch_size = " << batch_size << "\ncrop = " << crop
      << "\nlambda = " << lambda << "\nK = " << K << "\nalpha = " << alpha << "\nseed = " << seed
      << "\nsupervise = " << to_string(supervise) << "\npredict = " << deeperaser::to_string(predict)
      << "\nuse_context = " << std::boolalpha << use_context << "\nuse_prev_image = " << use_prev_image
      << "\nshare_weights = " << share_weights << "\nmask_mode = " << to_string(mask_mode)
      << "\nresample_masks = " << resample_masks << "\nlatent_channels = " << latent_channels
      << "\nbackbone_width = " << backbone_width << "\nnum_residual_blocks = " << num_residual_blocks
      << "\nhead_hidden = " << head_hidden << "\nextractor_mid = " << extractor_mid
      << "\nextractor_out = " << extractor_out << "\nerasing_module = " << erasing_module << "\n";
    return s.str();
  }
};

/// Parses `key = value` lines; '#' starts a comment, blank lines are skipped.
inline TrainConfig parse_train_config(std::istream& in, TrainConfig base = {}) {
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

inline TrainConfig load_train_config(const std::string& path, TrainConfig base = {}) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open config '" + path + "'");
  return parse_train_config(f, std::move(base));
}

// ---------------------------------------------------------------------------------------------

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// splitmix64 finalizer; derives independent stream seeds from (seed, a, b).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = seed ^ (a * 0x9E3779B97F4A7C15ull) ^ (b * 0xC2B2AE3D27D4EB4Full);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct CropWindow {
  int y = 0;
  int x = 0;
  int size = 0;
};

/// Picks a crop x crop window inside the image. When the mask has any set pixel the window
/// contains at least one of them.
inline CropWindow sample_crop(const Mask& mask, int crop, std::mt19937_64& rng) {
  if (crop > mask.height || crop > mask.width) {
    throw std::invalid_argument("crop " + std::to_string(crop) + " exceeds image size " + std::to_string(mask.height) +
                                "x" + std::to_string(mask.width));
  }
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1)); };
  std::vector<std::size_t> on;
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    if (mask.data[i]) on.push_back(i);
  CropWindow w{0, 0, crop};
  if (on.empty()) {
    w.y = pick(0, mask.height - crop);
    w.x = pick(0, mask.width - crop);
    return w;
  }
  const std::size_t p = on[rng() % on.size()];
  const int py = static_cast<int>(p / static_cast<std::size_t>(mask.width));
  const int px = static_cast<int>(p % static_cast<std::size_t>(mask.width));
  w.y = pick(std::max(0, py - crop + 1), std::min(py, mask.height - crop));
  w.x = pick(std::max(0, px - crop + 1), std::min(px, mask.width - crop));
  return w;
}

inline Image8 crop_image(const Image8& im, const CropWindow& w) {
  Image8 out(w.size, w.size, im.channels);
  for (int y = 0; y < w.size; ++y)
    for (int x = 0; x < w.size; ++x)
      for (int c = 0; c < im.channels; ++c) out.at(y, x, c) = im.at(w.y + y, w.x + x, c);
  return out;
}

inline Mask crop_mask(const Mask& m, const CropWindow& w) {
  Mask out(w.size, w.size);
  for (int y = 0; y < w.size; ++y)
    for (int x = 0; x < w.size; ++x) out.at(y, x) = m.at(w.y + y, w.x + x);
  return out;
}

/// Model input mask and training target for one sample under a mask mode.
struct PreparedSample {
  Image8 image;
  Mask input_mask;  // what the network sees
  Mask mask;        // region the target erases (for compositing)
  Image8 gt;
};

inline PreparedSample prepare_sample(const Triplet& t, MaskMode mode, double alpha, bool resample,
                                     std::uint64_t selection_seed) {
  PreparedSample s;
  s.image = t.image;
  const bool can_reselect = !t.instances.empty() && t.gt_all_removed.has_value();
  switch (mode) {
    case MaskMode::part:
      if (resample && can_reselect) {
        const Triplet r = reselect(t, select_instances(t.instances, alpha, selection_seed));
        s.mask = r.mask;
        s.gt = r.gt;
      } else {
        s.mask = t.mask;
        s.gt = t.gt;
      }
      s.input_mask = s.mask;
      break;
    case MaskMode::all:
      if (can_reselect) {
        const Triplet r = reselect(t, all_ids(t.instances));
        s.mask = r.mask;
        s.gt = r.gt;
      } else {
        s.mask = t.mask;
        s.gt = t.gt;
      }
      s.input_mask = s.mask;
      break;
    case MaskMode::none:
      s.mask = can_reselect ? rasterize_mask(t.instances, t.image.height, t.image.width) : t.mask;
      s.gt = t.gt_all_removed.value_or(t.gt);
      s.input_mask = Mask(t.image.height, t.image.width, 0);
      break;
  }
  return s;
}

/// Stateful trainer: weights, optimizer moments and the global step counter.
template <class T>
class Trainer {
 public:
  Trainer(Weights<T> weights, TrainConfig config, long total_steps)
      : weights_(std::move(weights)), optimizer_(weights_), config_(std::move(config)), total_steps_(total_steps) {
    config_.validate();
  }

  static long steps_per_epoch(std::size_t dataset_size, int batch_size) {
    return static_cast<long>((dataset_size + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size));
  }

  const Weights<T>& weights() const { return weights_; }
  Weights<T>& weights() { return weights_; }
  const Adam<T>& optimizer() const { return optimizer_; }
  void set_optimizer(Adam<T> opt) { optimizer_ = std::move(opt); }
  long step() const { return optimizer_.step; }

  /// One shuffled pass over `dataset` in batches of batch_size crops.
  std::vector<LossReport> run_epoch(const std::vector<Triplet>& dataset, int epoch,
                                    const std::function<void(const LossReport&)>& on_step = {}) {
    if (dataset.empty()) throw std::invalid_argument("train_epoch: dataset is empty");
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(config_.seed, 0x5eed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<LossReport> reports;
    const int K = weights_.config.erasing_module ? config_.K : 1;
    const bool final_only = config_.supervise == Supervision::final_only;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config_.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config_.batch_size));
      const double batch = static_cast<double>(end - begin);
      Weights<T> grad = zeros_like(weights_);
      LossReport report;
      report.per_iteration.assign(static_cast<std::size_t>(K), 0.0);
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t idx = order[i];
        const PreparedSample s =
            prepare_sample(dataset[idx], config_.mask_mode, config_.alpha, config_.resample_masks,
                           mix_seed(config_.seed, static_cast<std::uint64_t>(epoch) + 1, idx));
        const CropWindow win = sample_crop(s.input_mask.empty_mask() ? s.mask : s.input_mask, config_.crop, rng);
        const FeatureMap<T> image = to_feature_map<T>(crop_image(s.image, win));
        const FeatureMap<T> mask = to_feature_map<T>(crop_mask(s.input_mask, win));
        const FeatureMap<T> gt = to_feature_map<T>(crop_image(s.gt, win));
        ForwardTape<T> tape;
        const ForwardResult<T> out = forward(weights_, image, mask, K, false, &tape);
        const LossReport l = weighted_l1_loss(out.predictions, gt, config_.lambda, final_only);
        report.total += l.total / batch;
        for (int k = 0; k < K; ++k) report.per_iteration[static_cast<std::size_t>(k)] += l.per_iteration[static_cast<std::size_t>(k)] / batch;
        backward(weights_, tape, weighted_l1_gradient(out.predictions, gt, config_.lambda, final_only, 1.0 / batch), grad);
      }
      report.step = optimizer_.step;
      report.lr = lr_schedule(std::min(optimizer_.step, total_steps_ - 1), total_steps_, config_.base_lr);
      if (!std::isfinite(report.total)) {
        std::ostringstream msg;
        msg << "non-finite loss at step " << report.step << " (lr " << report.lr << "): total " << report.total
            << ", per-iteration [";
        for (std::size_t k = 0; k < report.per_iteration.size(); ++k) msg << (k ? ", " : "") << report.per_iteration[k];
        msg << "]";
        throw TrainingError(msg.str());
      }
      optimizer_.update(weights_, grad, report.lr);
      if (on_step) on_step(report);
      reports.push_back(std::move(report));
    }
    return reports;
  }

 private:
  Weights<T> weights_;
  Adam<T> optimizer_;
  TrainConfig config_;
  long total_steps_;
};

template <class T>
struct TrainResult {
  Weights<T> weights;
  std::vector<LossReport> log;
};

/// Runs config.epochs epochs from `initial`. Zero epochs returns the weights untouched.
template <class T>
TrainResult<T> train(Weights<T> initial, const std::vector<Triplet>& dataset, const TrainConfig& config,
                     const std::function<void(const LossReport&)>& on_step = {}) {
  TrainResult<T> result;
  if (config.epochs == 0) {
    result.weights = std::move(initial);
    return result;
  }
  const long total = Trainer<T>::steps_per_epoch(dataset.size(), config.batch_size) * config.epochs;
  Trainer<T> trainer(std::move(initial), config, total);
  for (int e = 0; e < config.epochs; ++e) {
    auto reports = trainer.run_epoch(dataset, e, on_step);
    result.log.insert(result.log.end(), reports.begin(), reports.end());
  }
  result.weights = trainer.weights();
  return result;
}

/// JSON-lines record for one optimizer step.
inline std::string loss_record(const LossReport& r) {
  nlohmann::json j{{"step", r.step}, {"lr", r.lr}, {"total", r.total}, {"per_iteration", r.per_iteration}};
  return j.dump();
}

// ---------------------------------------------------------------------------------------------
// Evaluation

enum class Protocol { raw, composited };

inline Protocol parse_protocol(const std::string& s) {
  if (s == "raw") return Protocol::raw;
  if (s == "composited") return Protocol::composited;
  throw std::invalid_argument("unknown protocol '" + s + "' (expected raw|composited)");
}

struct EvalOptions {
  int iterations = 8;
  Protocol protocol = Protocol::raw;
  bool zero_mask_input = false;  // models trained without a mask
};

inline Image8 apply_protocol(const Image8& pred, const Triplet& t, Protocol p) {
  return p == Protocol::composited ? composite_non_text(pred, t.image, t.mask) : pred;
}

/// Predicted 8-bit images I_1..I_K for one triplet.
template <class T>
std::vector<Image8> predict_iterations(const Weights<T>& w, const Triplet& t, int iterations, bool zero_mask_input) {
  const FeatureMap<T> image = to_feature_map<T>(t.image);
  const FeatureMap<T> mask = to_feature_map<T>(zero_mask_input ? Mask(t.mask.height, t.mask.width, 0) : t.mask);
  const ForwardResult<T> out = forward(w, image, mask, iterations);
  std::vector<Image8> frames;
  for (const auto& p : out.predictions) frames.push_back(to_image8(p));
  return frames;
}

/// Dataset-level metrics of the final prediction, in dataset order.
template <class T>
MetricReport evaluate_model(const Weights<T>& w, const std::vector<Triplet>& dataset, const EvalOptions& opts) {
  if (dataset.empty()) throw std::invalid_argument("evaluate_dataset: empty dataset");
  std::vector<MetricReport> per;
  for (const auto& t : dataset) {
    const auto frames = predict_iterations(w, t, opts.iterations, opts.zero_mask_input);
    per.push_back(image_metrics(apply_protocol(frames.back(), t, opts.protocol), t.gt));
  }
  return average_reports(per);
}

/// Mean PSNR of I_k for every k = 1..iterations.
template <class T>
std::vector<double> psnr_per_iteration(const Weights<T>& w, const std::vector<Triplet>& dataset, int iterations,
                                       bool zero_mask_input = false, Protocol protocol = Protocol::raw) {
  std::vector<std::vector<MetricReport>> per(static_cast<std::size_t>(iterations));
  for (const auto& t : dataset) {
    const auto frames = predict_iterations(w, t, iterations, zero_mask_input);
    for (std::size_t k = 0; k < frames.size(); ++k) {
      MetricReport r;
      r.psnr = psnr(apply_protocol(frames[k], t, protocol), t.gt);
      per[k].push_back(r);
    }
  }
  std::vector<double> out;
  for (const auto& reps : per)
    if (!reps.empty()) out.push_back(average_reports(reps).psnr);
  return out;
}

/// Scores prediction images named <id>.png in `pred_dir` against the dataset.
inline MetricReport evaluate_prediction_dir(const std::filesystem::path& pred_dir, const std::vector<Triplet>& dataset,
                                            Protocol protocol) {
  if (dataset.empty()) throw std::invalid_argument("evaluate_dataset: empty dataset");
  std::vector<MetricReport> per;
  for (const auto& t : dataset) {
    const auto path = pred_dir / (t.id + ".png");
    if (!std::filesystem::exists(path)) throw DatasetError(t.id, "missing prediction " + path.string());
    Image8 pred;
    try {
      pred = read_png(path, 3);
    } catch (const std::exception& e) {
      throw DatasetError(t.id, e.what());
    }
    if (!pred.same_shape(t.gt)) {
      throw DatasetError(t.id, "prediction shape " + shape_string(pred) + " != gt shape " + shape_string(t.gt));
    }
    per.push_back(image_metrics(apply_protocol(pred, t, protocol), t.gt));
  }
  return average_reports(per);
}

// ---------------------------------------------------------------------------------------------
// Ablations

struct AblationSpec {
  std::string name;
  TrainConfig config;
  int eval_iterations = 0;  // 0 = trained K
};

inline std::vector<std::string> ablation_names() {
  return {"full",        "direct_prediction", "no_context", "no_prev_image", "no_erasing_module", "no_weight_sharing",
          "final_only",  "no_mask",           "all_mask",   "part_mask",     "train_iters_<N>",   "infer_iters_<N>"};
}

inline AblationSpec make_ablation(const std::string& variant, const TrainConfig& base) {
  AblationSpec s{variant, base, 0};
  auto suffix_int = [&](const std::string& prefix) -> std::optional<int> {
    if (variant.rfind(prefix, 0) != 0) return std::nullopt;
    const std::string digits = variant.substr(prefix.size());
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) return std::nullopt;
    const int n = std::stoi(digits);
    if (n < 1) return std::nullopt;
    return n;
  };
  if (variant == "full" || variant == "part_mask") {
    s.config.mask_mode = MaskMode::part;
  } else if (variant == "direct_prediction") {
    s.config.predict = Prediction::direct;
  } else if (variant == "no_context") {
    s.config.use_context = false;
  } else if (variant == "no_prev_image") {
    s.config.use_prev_image = false;
  } else if (variant == "no_erasing_module") {
    s.config.erasing_module = false;
  } else if (variant == "no_weight_sharing") {
    s.config.share_weights = false;
  } else if (variant == "final_only") {
    s.config.supervise = Supervision::final_only;
  } else if (variant == "no_mask") {
    s.config.mask_mode = MaskMode::none;
  } else if (variant == "all_mask") {
    s.config.mask_mode = MaskMode::all;
  } else if (auto k = suffix_int("train_iters_")) {
    s.config.K = *k;
  } else if (auto k2 = suffix_int("infer_iters_")) {
    s.eval_iterations = *k2;
  } else {
    std::string names;
    for (const auto& n : ablation_names()) names += (names.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown ablation variant '" + variant + "' (valid: " + names + ")");
  }
  return s;
}

struct AblationResult {
  std::string variant;
  MetricReport metrics;
  std::size_t parameters = 0;
  double final_loss = 0;

  static std::string table_header() { return "Variant," + MetricReport::table_header() + ",Para."; }
  std::string table_row() const {
    std::ostringstream s;
    s << variant << ',' << metrics.table_row() << ',' << std::fixed << std::setprecision(4)
      << static_cast<double>(parameters) / 1e6;
    return s.str();
  }
};

/// Trains the ablated model on `train_set` and scores it on `eval_set`.
template <class T = float>
AblationResult run_ablation(const std::string& variant, const TrainConfig& base, const std::vector<Triplet>& train_set,
                            const std::vector<Triplet>& eval_set, Protocol protocol = Protocol::raw,
                            Weights<T>* trained_out = nullptr) {
  const AblationSpec spec = make_ablation(variant, base);
  spec.config.validate();
  Weights<T> init = init_model<T>(spec.config.model_config(), spec.config.seed);
  TrainResult<T> trained = train(std::move(init), train_set, spec.config);
  EvalOptions eo;
  eo.iterations = spec.eval_iterations > 0 ? spec.eval_iterations : spec.config.K;
  if (!spec.config.share_weights) eo.iterations = std::min(eo.iterations, spec.config.K);
  eo.protocol = protocol;
  eo.zero_mask_input = spec.config.mask_mode == MaskMode::none;
  AblationResult r;
  r.variant = variant;
  r.metrics = evaluate_model(trained.weights, eval_set, eo);
  r.parameters = count_parameters(trained.weights, ParamScope::all);
  r.final_loss = trained.log.empty() ? 0.0 : trained.log.back().total;
  if (trained_out) *trained_out = std::move(trained.weights);
  return r;
}

}  // namespace deeperaser
