#pragma once

#include "synth.hpp"

#include <png.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace deeperaser {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decodes PNG bytes. `channels` = 3 converts to RGB, 1 to gray, 0 keeps the native
/// channel count (alpha dropped).
inline Image8 decode_png(std::string_view bytes, int channels = 3, const std::string& what = "png") {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    std::string msg = img.message;
    png_image_free(&img);
    throw ImageIoError(what + ": " + msg);
  }
  if (channels == 0) channels = (img.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
  img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image8 out(static_cast<int>(img.height), static_cast<int>(img.width), channels);
  if (!png_image_finish_read(&img, nullptr, out.data.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw ImageIoError(what + ": " + msg);
  }
  return out;
}

/// Width and height from the PNG header without decoding pixels.
inline std::pair<int, int> png_dimensions(std::string_view bytes, const std::string& what = "png") {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    std::string msg = img.message;
    png_image_free(&img);
    throw ImageIoError(what + ": " + msg);
  }
  const std::pair<int, int> wh{static_cast<int>(img.width), static_cast<int>(img.height)};
  png_image_free(&img);
  return wh;
}

inline std::string encode_png(const Image8& im) {
  if (im.channels != 1 && im.channels != 3) throw ImageIoError("encode_png: unsupported channel count");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(im.width);
  img.height = static_cast<png_uint_32>(im.height);
  img.format = im.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, im.data.data(), 0, nullptr)) {
    throw ImageIoError(std::string("encode_png: ") + img.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, im.data.data(), 0, nullptr)) {
    throw ImageIoError(std::string("encode_png: ") + img.message);
  }
  out.resize(size);
  return out;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw ImageIoError("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, std::string_view bytes) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ImageIoError("cannot open '" + p.string() + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ImageIoError("failed writing '" + p.string() + "'");
}

inline Image8 read_png(const std::filesystem::path& p, int channels = 3) {
  return decode_png(read_file(p), channels, p.string());
}

inline void write_png(const std::filesystem::path& p, const Image8& im) { write_file(p, encode_png(im)); }

/// Mask PNGs are 8-bit single channel with values exactly {0, 255}.
inline Mask mask_from_image(const Image8& im, const std::string& what) {
  if (im.channels != 1) throw std::invalid_argument(what + ": mask must be single channel");
  Mask m(im.height, im.width);
  for (std::size_t i = 0; i < im.data.size(); ++i) {
    const auto v = im.data[i];
    if (v != 0 && v != 255) {
      throw std::invalid_argument(what + ": mask value " + std::to_string(v) + " at pixel " + std::to_string(i) +
                                  " (expected 0 or 255)");
    }
    m.data[i] = v ? 1 : 0;
  }
  return m;
}

inline Image8 mask_to_image(const Mask& m) {
  Image8 im(m.height, m.width, 1);
  for (std::size_t i = 0; i < m.data.size(); ++i) im.data[i] = m.data[i] ? 255 : 0;
  return im;
}

inline Mask read_mask_png(const std::filesystem::path& p) {
  return mask_from_image(decode_png(read_file(p), 0, p.string()), p.string());
}

inline void write_mask_png(const std::filesystem::path& p, const Mask& m) { write_png(p, mask_to_image(m)); }

// ---------------------------------------------------------------------------------------------
// Annotations: [{"id": int, "polygon": [[x, y], ...], "text": str}, ...]

inline nlohmann::json annotations_to_json(const std::vector<TextInstance>& instances) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& inst : instances) {
    nlohmann::json poly = nlohmann::json::array();
    for (const auto& p : inst.polygon) poly.push_back({p.x, p.y});
    nlohmann::json j{{"id", inst.id}, {"polygon", poly}, {"text", inst.text}};
    if (inst.render_params) {
      const auto& rp = *inst.render_params;
      j["render"] = {{"font_px", rp.font_px}, {"color", rp.color}, {"rotation_deg", rp.rotation_deg}};
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

inline std::vector<TextInstance> annotations_from_json(const nlohmann::json& arr) {
  std::vector<TextInstance> out;
  for (const auto& j : arr) {
    TextInstance inst;
    inst.id = j.at("id").get<int>();
    inst.text = j.value("text", std::string());
    for (const auto& p : j.at("polygon")) inst.polygon.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    validate_polygon(inst);
    if (j.contains("render")) {
      RenderParams rp;
      rp.font_px = j["render"].at("font_px").get<int>();
      rp.color = j["render"].at("color").get<std::array<std::uint8_t, 3>>();
      rp.rotation_deg = j["render"].at("rotation_deg").get<double>();
      inst.render_params = rp;
    }
    out.push_back(std::move(inst));
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Dataset directory:
//   <root>/images/<id>.png  input image
//   <root>/gts/<id>.png     all-text-removed ground truth
//   <root>/anns/<id>.json   instance annotations
//   <root>/masks/<id>.png   optional prepared mask (0/255), takes precedence over anns

class DatasetError : public std::runtime_error {
 public:
  DatasetError(std::string sample_id, const std::string& what)
      : std::runtime_error("sample '" + sample_id + "': " + what), sample_id_(std::move(sample_id)) {}
  const std::string& sample_id() const { return sample_id_; }

 private:
  std::string sample_id_;
};

struct LoadOptions {
  int dilate = 0;  // mask dilation radius in pixels
};

/// Sorted sample ids (file stems under images/).
inline std::vector<std::string> list_dataset_ids(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const fs::path images = root / "images";
  if (!fs::is_directory(images)) throw ImageIoError("dataset '" + root.string() + "' has no images/ directory");
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(images))
    if (e.is_regular_file() && e.path().extension() == ".png") ids.push_back(e.path().stem().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline Triplet load_dataset_sample(const std::filesystem::path& root, const std::string& id, LoadOptions opts = {}) {
  try {
    Triplet t;
    t.id = id;
    t.image = read_png(root / "images" / (id + ".png"), 3);
    const Image8 gt = read_png(root / "gts" / (id + ".png"), 3);
    if (!gt.same_shape(t.image)) {
      throw std::invalid_argument("gt shape " + shape_string(gt) + " != image shape " + shape_string(t.image));
    }
    const auto ann = root / "anns" / (id + ".json");
    if (std::filesystem::exists(ann)) t.instances = annotations_from_json(nlohmann::json::parse(read_file(ann)));
    const auto mask_path = root / "masks" / (id + ".png");
    if (std::filesystem::exists(mask_path)) {
      t.mask = read_mask_png(mask_path);
      if (t.mask.height != t.image.height || t.mask.width != t.image.width) {
        throw std::invalid_argument("mask size " + std::to_string(t.mask.height) + "x" + std::to_string(t.mask.width) +
                                    " != image size");
      }
    } else if (std::filesystem::exists(ann)) {
      t.mask = rasterize_mask(t.instances, t.image.height, t.image.width);
    } else {
      throw std::invalid_argument("missing both anns/" + id + ".json and masks/" + id + ".png");
    }
    t.mask = dilate(t.mask, opts.dilate);
    t.gt = gt;
    t.gt_all_removed = gt;
    return t;
  } catch (const DatasetError&) {
    throw;
  } catch (const std::exception& e) {
    throw DatasetError(id, e.what());
  }
}

/// Loads every sample in lexicographic id order.
inline std::vector<Triplet> load_dataset_dir(const std::filesystem::path& root, LoadOptions opts = {}) {
  std::vector<Triplet> out;
  for (const auto& id : list_dataset_ids(root)) out.push_back(load_dataset_sample(root, id, opts));
  return out;
}

/// Writes a scene in the dataset layout (full render, all-removed gt, annotations).
inline void write_dataset_sample(const std::filesystem::path& root, const std::string& id, const SceneSample& scene) {
  namespace fs = std::filesystem;
  for (const char* sub : {"images", "gts", "anns"}) fs::create_directories(root / sub);
  write_png(root / "images" / (id + ".png"), render_scene(scene, all_ids(scene.instances)));
  write_png(root / "gts" / (id + ".png"), scene.background);
  write_file(root / "anns" / (id + ".json"), annotations_to_json(scene.instances).dump(1));
}

}  // namespace deeperaser
