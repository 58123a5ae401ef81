#pragma once

// Checkpoint container (all integers little-endian):
//   magic "DEERCKPT" | u32 format_version | u32 n + n bytes of ModelConfig JSON
//   u32 tensor_count | per tensor: u32 name_len, name, u32 ndim, u32 dims[ndim], f32 data[prod(dims)]
//   u32 has_optimizer | [i64 adam_step | first-moment tensors | second-moment tensors] (same layout, unnamed)

#include "optim.hpp"
#include "weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>

namespace deeperaser {

inline constexpr char kCheckpointMagic[8] = {'D', 'E', 'E', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
  static_assert(std::is_integral_v<U> || std::is_same_v<U, float>);
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::string_view buf) : buf_(buf) {}

  template <class U>
  U get() {
    need(sizeof(U));
    unsigned char bytes[sizeof(U)];
    std::memcpy(bytes, buf_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
    pos_ += sizeof(U);
    U v;
    std::memcpy(&v, bytes, sizeof(U));
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(buf_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::string_view buf_;
  std::size_t pos_ = 0;
};

template <class T>
void write_conv_tensors(std::string& out, const Weights<T>& w, bool with_names) {
  for_each_conv(w, [&](const std::string& name, const Conv2d<T>& c, ParamScope) {
    auto emit = [&](const std::string& n, const auto& data, std::vector<std::uint32_t> dims) {
      if (with_names) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(n.size()));
        out += n;
      }
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dims.size()));
      for (auto d : dims) put_le<std::uint32_t>(out, d);
      for (Eigen::Index i = 0; i < data.size(); ++i) put_le<float>(out, static_cast<float>(data.data()[i]));
    };
    const auto k = static_cast<std::uint32_t>(c.kernel);
    emit(name + ".weight", c.weight,
         {static_cast<std::uint32_t>(c.out_channels), static_cast<std::uint32_t>(c.in_channels), k, k});
    emit(name + ".bias", c.bias, {static_cast<std::uint32_t>(c.out_channels)});
  });
}

template <class T>
void read_conv_tensors(Reader& in, Weights<T>& w, bool with_names) {
  for_each_conv(w, [&](const std::string& name, Conv2d<T>& c, ParamScope) {
    auto take = [&](const std::string& expected, auto& data) {
      if (with_names) {
        const auto len = in.get<std::uint32_t>();
        const std::string n = in.bytes(len);
        if (n != expected) throw CheckpointError("checkpoint tensor '" + n + "' where '" + expected + "' expected");
      }
      const auto ndim = in.get<std::uint32_t>();
      std::size_t count = 1;
      for (std::uint32_t i = 0; i < ndim; ++i) count *= in.get<std::uint32_t>();
      if (count != static_cast<std::size_t>(data.size())) {
        throw CheckpointError("checkpoint tensor '" + expected + "' has " + std::to_string(count) + " values, expected " +
                              std::to_string(data.size()));
      }
      for (Eigen::Index i = 0; i < data.size(); ++i) data.data()[i] = static_cast<T>(in.get<float>());
    };
    take(name + ".weight", c.weight);
    take(name + ".bias", c.bias);
  });
}

}  // namespace detail

template <class T>
std::string serialize_checkpoint(const Weights<T>& w, const Adam<T>* optimizer = nullptr) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  const std::string cfg = nlohmann::json(w.config).dump();
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  std::uint32_t tensors = 0;
  for_each_parameter(w, [&](const std::string&, const auto&, ParamScope) { ++tensors; });
  detail::put_le<std::uint32_t>(out, tensors);
  detail::write_conv_tensors(out, w, true);
  detail::put_le<std::uint32_t>(out, optimizer ? 1u : 0u);
  if (optimizer) {
    detail::put_le<std::int64_t>(out, optimizer->step);
    detail::write_conv_tensors(out, optimizer->first_moment, false);
    detail::write_conv_tensors(out, optimizer->second_moment, false);
  }
  return out;
}

template <class T>
struct LoadedCheckpoint {
  Weights<T> weights;
  std::optional<Adam<T>> optimizer;
  std::string id;  // content hash, stable for identical files
};

template <class T>
LoadedCheckpoint<T> deserialize_checkpoint(std::string_view bytes) {
  detail::Reader in(bytes);
  if (in.bytes(sizeof(kCheckpointMagic)) != std::string(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto cfg_len = in.get<std::uint32_t>();
  ModelConfig cfg;
  try {
    cfg = nlohmann::json::parse(in.bytes(cfg_len)).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint config: ") + e.what());
  }
  LoadedCheckpoint<T> result;
  result.weights = make_zero_weights<T>(cfg);
  std::uint32_t expected = 0;
  for_each_parameter(result.weights, [&](const std::string&, const auto&, ParamScope) { ++expected; });
  const auto tensors = in.get<std::uint32_t>();
  if (tensors != expected) {
    throw CheckpointError("checkpoint has " + std::to_string(tensors) + " tensors, config implies " +
                          std::to_string(expected));
  }
  detail::read_conv_tensors(in, result.weights, true);
  if (in.get<std::uint32_t>() != 0) {
    Adam<T> opt(result.weights);
    opt.step = static_cast<long>(in.get<std::int64_t>());
    detail::read_conv_tensors(in, opt.first_moment, false);
    detail::read_conv_tensors(in, opt.second_moment, false);
    result.optimizer = std::move(opt);
  }
  if (!in.done()) throw CheckpointError("trailing bytes after checkpoint payload");
  std::ostringstream id;
  id << std::hex << std::setw(16) << std::setfill('0') << std::hash<std::string_view>{}(bytes);
  result.id = id.str();
  return result;
}

template <class T>
void save_checkpoint(const std::string& path, const Weights<T>& w, const Adam<T>* optimizer = nullptr) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open '" + path + "' for writing");
  const std::string bytes = serialize_checkpoint(w, optimizer);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("failed writing '" + path + "'");
}

template <class T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint<T>(ss.str());
}

}  // namespace deeperaser
