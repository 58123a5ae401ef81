#pragma once

#include "checkpoint.hpp"
#include "image_io.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "strokes.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace deeperaser {

inline std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

/// Accepts plain base64 or a data URL; whitespace is ignored.
inline std::string base64_decode(std::string_view text) {
  if (text.rfind("data:", 0) == 0) {
    const auto comma = text.find(',');
    if (comma == std::string_view::npos) throw std::invalid_argument("malformed data URL");
    text.remove_prefix(comma + 1);
  }
  std::string clean;
  clean.reserve(text.size());
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) clean.push_back(c);
  if (clean.size() % 4 != 0) throw std::invalid_argument("base64 length is not a multiple of 4");
  std::string out(3 * clean.size() / 4, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(clean.data()), static_cast<int>(clean.size()));
  if (n < 0) throw std::invalid_argument("invalid base64");
  std::size_t pad = 0;
  if (!clean.empty() && clean.back() == '=') ++pad;
  if (clean.size() > 1 && clean[clean.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  int max_width = 1024;
  int max_height = 1024;
  std::string cors_origin = "*";
  std::size_t max_payload_bytes = 64u << 20;
};

struct EraseRequest {
  std::string image_png;
  std::optional<std::string> mask_png;
  std::optional<StrokeSet> strokes;
  std::optional<int> iters;
  bool return_frames = false;
  bool raw = false;  // skip compositing and return the clamped network output
};

struct EraseResponse {
  std::string result_png;
  std::vector<std::string> frames;
  double timing_ms = 0.0;
  nlohmann::json model_info;

  nlohmann::json to_json() const {
    nlohmann::json j{{"result", base64_encode(result_png)}, {"timing_ms", timing_ms}, {"model_info", model_info}};
    if (!frames.empty()) {
      nlohmann::json f = nlohmann::json::array();
      for (const auto& png : frames) f.push_back(base64_encode(png));
      j["frames"] = std::move(f);
    }
    return j;
  }
};

/// Error carrying the HTTP status it maps to.
class HttpError : public std::runtime_error {
 public:
  HttpError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

/// Holds the immutable loaded model and answers erase requests.
/// Inference is single-flight; the weights are never modified after load.
class EraseService {
 public:
  explicit EraseService(ServeOptions options = {}) : options_(std::move(options)) {}

  const ServeOptions& options() const { return options_; }

  void load(LoadedCheckpoint<float> checkpoint) {
    auto m = std::make_shared<const Loaded>(Loaded{std::move(checkpoint.weights), std::move(checkpoint.id)});
    std::lock_guard lock(model_mutex_);
    model_ = std::move(m);
  }

  void load_file(const std::string& path) { load(load_checkpoint<float>(path)); }

  bool ready() const { return current() != nullptr; }

  nlohmann::json health() const {
    auto m = require_model();
    return {{"status", "ok"}, {"checkpoint_id", m->id}};
  }

  nlohmann::json model_info() const { return info(*require_model()); }

  EraseResponse erase(const EraseRequest& req) const {
    auto m = require_model();
    const auto start = std::chrono::steady_clock::now();
    if (req.mask_png.has_value() == req.strokes.has_value()) {
      throw HttpError(422, "provide exactly one of 'mask' or 'strokes'");
    }
    std::pair<int, int> wh;
    try {
      wh = png_dimensions(req.image_png, "image");
    } catch (const std::exception& e) {
      throw HttpError(400, e.what());
    }
    if (wh.first > options_.max_width || wh.second > options_.max_height) {
      throw HttpError(413, "image " + std::to_string(wh.first) + "x" + std::to_string(wh.second) + " exceeds limit " +
                               std::to_string(options_.max_width) + "x" + std::to_string(options_.max_height));
    }
    Image8 image;
    Mask mask;
    try {
      image = decode_png(req.image_png, 3, "image");
      if (req.mask_png) {
        mask = mask_from_image(decode_png(*req.mask_png, 0, "mask"), "mask");
        if (mask.height != image.height || mask.width != image.width) {
          throw std::invalid_argument("mask size " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                                      " != image size " + std::to_string(image.width) + "x" +
                                      std::to_string(image.height));
        }
      } else {
        const StrokeSet& s = *req.strokes;
        if (s.canvas_width != image.width || s.canvas_height != image.height) {
          throw std::invalid_argument("stroke canvas " + std::to_string(s.canvas_width) + "x" +
                                      std::to_string(s.canvas_height) + " != image size");
        }
        mask = rasterize_strokes(s, image.width, image.height);
      }
    } catch (const HttpError&) {
      throw;
    } catch (const std::exception& e) {
      throw HttpError(400, e.what());
    }
    const ModelConfig& cfg = m->weights.config;
    const int iters = req.iters.value_or(cfg.iterations);
    if (iters < 1) throw HttpError(400, "iters must be >= 1");
    if (cfg.erasing_module && !cfg.share_weights && iters > cfg.iterations) {
      throw HttpError(400, "this model supports at most " + std::to_string(cfg.iterations) + " iterations");
    }

    ForwardResult<float> out;
    {
      std::lock_guard lock(inference_mutex_);
      out = forward(m->weights, to_feature_map<float>(image), to_feature_map<float>(mask), iters);
    }
    EraseResponse resp;
    const Image8 final_image = to_image8(out.predictions.back());
    resp.result_png = encode_png(req.raw ? final_image : composite_non_text(final_image, image, mask));
    if (req.return_frames) {
      for (const auto& p : out.predictions) resp.frames.push_back(encode_png(to_image8(p)));
    }
    resp.model_info = info(*m);
    resp.timing_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return resp;
  }

 private:
  struct Loaded {
    Weights<float> weights;
    std::string id;
  };

  std::shared_ptr<const Loaded> current() const {
    std::lock_guard lock(model_mutex_);
    return model_;
  }

  std::shared_ptr<const Loaded> require_model() const {
    auto m = current();
    if (!m) throw HttpError(503, "checkpoint not loaded yet");
    return m;
  }

  static nlohmann::json info(const Loaded& m) {
    return {{"param_count", count_parameters(m.weights, ParamScope::all)},
            {"K", m.weights.config.iterations},
            {"D", m.weights.config.latent_channels},
            {"checkpoint_id", m.id}};
  }

  ServeOptions options_;
  mutable std::mutex model_mutex_;
  mutable std::mutex inference_mutex_;
  std::shared_ptr<const Loaded> model_;
};

namespace detail {

inline bool truthy(const std::string& v) { return v == "1" || v == "true" || v == "yes" || v == "on"; }

inline std::optional<int> parse_iters(const std::string& v) {
  if (v.empty()) return std::nullopt;
  std::size_t used = 0;
  int n = 0;
  try {
    n = std::stoi(v, &used);
  } catch (const std::exception&) {
    throw HttpError(400, "iters must be an integer");
  }
  if (used != v.size()) throw HttpError(400, "iters must be an integer");
  return n;
}

inline StrokeSet parse_strokes_text(const std::string& text) {
  try {
    return strokes_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw HttpError(400, std::string("strokes: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw HttpError(400, e.what());
  }
}

inline std::uint64_t mix_error_id(std::uint64_t salt, std::uint64_t n) {
  std::uint64_t z = salt + (n + 1) * 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::string error_id() {
  static std::atomic<std::uint64_t> counter{0};
  static const std::uint64_t salt = std::random_device{}();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(mix_error_id(salt, counter.fetch_add(1))));
  return buf;
}

}  // namespace detail

/// Builds an EraseRequest from multipart form data or a JSON body with base64 images.
/// The query string may carry `raw`, `iters` and `return_frames`.
inline EraseRequest parse_erase_request(const httplib::Request& http) {
  EraseRequest req;
  if (http.is_multipart_form_data()) {
    if (!http.has_file("image")) throw HttpError(400, "missing 'image' part");
    req.image_png = http.get_file_value("image").content;
    if (http.has_file("mask")) req.mask_png = http.get_file_value("mask").content;
    if (http.has_file("strokes")) req.strokes = detail::parse_strokes_text(http.get_file_value("strokes").content);
    if (http.has_file("iters")) req.iters = detail::parse_iters(http.get_file_value("iters").content);
    if (http.has_file("return_frames")) req.return_frames = detail::truthy(http.get_file_value("return_frames").content);
  } else {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(http.body);
    } catch (const nlohmann::json::exception& e) {
      throw HttpError(400, std::string("malformed JSON body: ") + e.what());
    }
    if (!j.is_object()) throw HttpError(400, "JSON body must be an object");
    try {
      if (!j.contains("image") || !j["image"].is_string()) throw HttpError(400, "missing base64 'image'");
      req.image_png = base64_decode(j["image"].get<std::string>());
      if (j.contains("mask") && !j["mask"].is_null()) req.mask_png = base64_decode(j["mask"].get<std::string>());
      if (j.contains("strokes") && !j["strokes"].is_null()) req.strokes = strokes_from_json(j["strokes"]);
      if (j.contains("iters") && !j["iters"].is_null()) req.iters = j["iters"].get<int>();
      req.return_frames = j.value("return_frames", false);
      req.raw = j.value("raw", false);
    } catch (const HttpError&) {
      throw;
    } catch (const std::exception& e) {
      throw HttpError(400, e.what());
    }
  }
  if (http.has_param("raw")) req.raw = detail::truthy(http.get_param_value("raw"));
  if (http.has_param("iters")) req.iters = detail::parse_iters(http.get_param_value("iters"));
  if (http.has_param("return_frames")) req.return_frames = detail::truthy(http.get_param_value("return_frames"));
  return req;
}

/// Installs /erase, /health, /model-info and CORS handling on `server`.
/// `service` must outlive the server.
inline void register_routes(httplib::Server& server, const EraseService& service) {
  const std::string origin = service.options().cors_origin;
  server.set_payload_max_length(service.options().max_payload_bytes);
  server.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
  server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  auto send_json = [](httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  // Maps exceptions to status codes. Internal failures get an opaque id that is logged.
  auto guarded = [send_json](auto&& body) {
    return [send_json, body](const httplib::Request& req, httplib::Response& res) {
      try {
        body(req, res);
      } catch (const HttpError& e) {
        send_json(res, e.status(), {{"error", e.what()}});
      } catch (const std::exception& e) {
        const std::string id = detail::error_id();
        std::fprintf(stderr, "serve: internal error %s: %s\n", id.c_str(), e.what());
        send_json(res, 500, {{"error", "internal error"}, {"id", id}});
      }
    };
  };

  server.Get("/health", guarded([&service, send_json](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, service.health());
  }));
  server.Get("/model-info", guarded([&service, send_json](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, service.model_info());
  }));
  server.Post("/erase", guarded([&service, send_json](const httplib::Request& req, httplib::Response& res) {
    if (!service.ready()) throw HttpError(503, "checkpoint not loaded yet");
    send_json(res, 200, service.erase(parse_erase_request(req)).to_json());
  }));
}

}  // namespace deeperaser
