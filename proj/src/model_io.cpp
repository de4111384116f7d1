#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "attrib/nn.hpp"

namespace attrib::nn {

namespace {

constexpr std::array<char, 8> kMagic = {'A', 'T', 'R', 'B', 'M', 'D', 'L', '\n'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

template <typename T>
void put_blob(std::string& out, const Tensor<T>& t) {
  for (T v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

nlohmann::json layer_to_json(const LayerSpec& s) {
  nlohmann::json j = {{"kind", std::string(to_string(s.kind))}, {"name", s.name}};
  switch (s.kind) {
    case LayerKind::kConv2d:
      j["in_channels"] = s.in_channels;
      j["out_channels"] = s.out_channels;
      j["kernel"] = s.kernel;
      j["stride"] = s.stride;
      break;
    case LayerKind::kDense:
      j["in_features"] = s.in_channels;
      j["out_features"] = s.out_channels;
      break;
    case LayerKind::kResidualAdd:
      j["skip"] = s.skip;
      break;
    default:
      break;
  }
  return j;
}

// Field accessor that names the offending field on failure.
template <typename V>
V field(const nlohmann::json& j, const std::string& key, const std::string& path) {
  const std::string name = path.empty() ? key : path + "." + key;
  if (!j.is_object() || !j.contains(key)) {
    throw Error("model file: missing field '" + name + "'");
  }
  try {
    return j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw Error("model file: field '" + name + "' has the wrong type");
  }
}

LayerSpec layer_from_json(const nlohmann::json& j, const std::string& path) {
  LayerSpec s;
  const auto kind = field<std::string>(j, "kind", path);
  try {
    s.kind = layer_kind_from_string(kind);
  } catch (const Error&) {
    throw Error("model file: field '" + path + ".kind' holds unknown kind '" + kind + "'");
  }
  s.name = field<std::string>(j, "name", path);
  switch (s.kind) {
    case LayerKind::kConv2d:
      s.in_channels = field<std::size_t>(j, "in_channels", path);
      s.out_channels = field<std::size_t>(j, "out_channels", path);
      s.kernel = field<std::size_t>(j, "kernel", path);
      s.stride = field<std::size_t>(j, "stride", path);
      break;
    case LayerKind::kDense:
      s.in_channels = field<std::size_t>(j, "in_features", path);
      s.out_channels = field<std::size_t>(j, "out_features", path);
      break;
    case LayerKind::kResidualAdd:
      s.skip = field<int>(j, "skip", path);
      break;
    default:
      break;
  }
  return s;
}

}  // namespace

template <typename T>
void save_model(const ModelGraph<T>& model, const std::filesystem::path& path) {
  const auto& meta = model.metadata();
  nlohmann::json header = {
      {"arch", meta.arch},
      {"input_shape", meta.input_shape},
      {"num_classes", meta.num_classes},
      {"class_names", meta.class_names},
      {"layers", nlohmann::json::array()},
  };
  for (const auto& s : model.layers()) header["layers"].push_back(layer_to_json(s));
  const std::string text = header.dump();

  std::string bytes(kMagic.begin(), kMagic.end());
  put_u32(bytes, kFormatVersion);
  put_u32(bytes, static_cast<std::uint32_t>(text.size()));
  bytes += text;
  for (const auto& p : model.params()) {
    if (p.weight.empty()) continue;
    put_blob(bytes, p.weight);
    put_blob(bytes, p.bias);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

template <typename T>
ModelGraph<T> load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file '" + path.string() + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  const std::size_t fixed = kMagic.size() + 8;
  if (bytes.size() < fixed ||
      std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw Error("model file: bad magic in '" + path.string() + "'");
  }
  const std::uint32_t version = get_u32(bytes.data() + kMagic.size());
  if (version != kFormatVersion) {
    throw Error("model file: field 'version' is " + std::to_string(version) +
                ", expected " + std::to_string(kFormatVersion));
  }
  const std::uint32_t header_len = get_u32(bytes.data() + kMagic.size() + 4);
  if (bytes.size() < fixed + header_len) {
    throw Error("model file: truncated header (field 'header_length' = " +
                std::to_string(header_len) + ")");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + fixed,
                                   bytes.begin() + fixed + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("model file: header is not valid JSON: ") + e.what());
  }

  ModelMetadata meta;
  meta.arch = field<std::string>(header, "arch", "");
  meta.input_shape = field<Shape>(header, "input_shape", "");
  meta.num_classes = field<std::size_t>(header, "num_classes", "");
  meta.class_names = field<std::vector<std::string>>(header, "class_names", "");
  if (!header.contains("layers") || !header["layers"].is_array()) {
    throw Error("model file: missing field 'layers'");
  }
  std::vector<LayerSpec> layers;
  for (std::size_t i = 0; i < header["layers"].size(); ++i) {
    layers.push_back(layer_from_json(header["layers"][i],
                                     "layers[" + std::to_string(i) + "]"));
  }

  std::size_t offset = fixed + header_len;
  auto read_blob = [&](Shape shape, const std::string& what) {
    const std::size_t n = shape_volume(shape);
    if (bytes.size() - offset < 4 * n) {
      throw Error("model file: truncated weights at field '" + what + "'");
    }
    std::vector<T> values(n);
    for (std::size_t k = 0; k < n; ++k) {
      values[k] = static_cast<T>(std::bit_cast<float>(get_u32(bytes.data() + offset)));
      offset += 4;
    }
    return Tensor<T>(std::move(shape), std::move(values));
  };
  std::vector<LayerParams<T>> params(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& s = layers[i];
    if (!s.has_params()) continue;
    const std::string name = "layers[" + std::to_string(i) + "]";
    Shape w = s.kind == LayerKind::kConv2d
                  ? Shape{s.out_channels, s.in_channels, s.kernel, s.kernel}
                  : Shape{s.out_channels, s.in_channels};
    params[i].weight = read_blob(std::move(w), name + ".weight");
    params[i].bias = read_blob({s.out_channels}, name + ".bias");
  }
  if (offset != bytes.size()) {
    throw Error("model file: " + std::to_string(bytes.size() - offset) +
                " trailing bytes after the last weight blob");
  }
  return ModelGraph<T>(std::move(layers), std::move(params), std::move(meta));
}

template void save_model(const ModelGraph<float>&, const std::filesystem::path&);
template void save_model(const ModelGraph<double>&, const std::filesystem::path&);
template ModelGraph<float> load_model(const std::filesystem::path&);
template ModelGraph<double> load_model(const std::filesystem::path&);

}  // namespace attrib::nn
