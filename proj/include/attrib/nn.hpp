#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "attrib/tensor.hpp"

namespace attrib::nn {

enum class LayerKind {
  kConv2d,
  kRelu,
  kMaxPool2x2,
  kGlobalAvgPool,
  kDense,
  kSoftmax,
  kResidualAdd,
};

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

// Index used for "the model input" wherever a layer index is expected.
inline constexpr int kModelInput = -1;

// One node of the layer graph. Every layer consumes the output of the layer
// before it (the model input for layer 0); residual_add additionally adds
// the output of `skip`.
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::string name;
  std::size_t in_channels = 0;   // conv: input channels; dense: input features
  std::size_t out_channels = 0;  // conv: filters; dense: output features
  std::size_t kernel = 0;        // conv only, odd, "same" padding kernel / 2
  std::size_t stride = 1;        // conv only
  int skip = kModelInput;        // residual_add only

  bool has_params() const noexcept {
    return kind == LayerKind::kConv2d || kind == LayerKind::kDense;
  }
  bool operator==(const LayerSpec&) const = default;
};

LayerSpec conv2d(std::string name, std::size_t in, std::size_t out,
                 std::size_t kernel = 3, std::size_t stride = 1);
LayerSpec dense(std::string name, std::size_t in, std::size_t out);
LayerSpec relu(std::string name);
LayerSpec maxpool2x2(std::string name);
LayerSpec global_avg_pool(std::string name);
LayerSpec softmax(std::string name);
LayerSpec residual_add(std::string name, int skip);

// Conv weight: out x in x k x k, bias: out. Dense weight: out x in, bias: out.
template <typename T>
struct LayerParams {
  Tensor<T> weight;
  Tensor<T> bias;
  bool operator==(const LayerParams&) const = default;
};

struct ModelMetadata {
  std::string arch;
  Shape input_shape;  // C x H x W
  std::size_t num_classes = 0;
  std::vector<std::string> class_names;
  bool operator==(const ModelMetadata&) const = default;
};

// Immutable layer graph plus weights. Construction validates the channel
// chain, residual edges and parameter shapes, and derives every layer's
// output shape for the metadata input shape.
template <typename T>
class ModelGraph {
 public:
  ModelGraph(std::vector<LayerSpec> layers, std::vector<LayerParams<T>> params,
             ModelMetadata metadata);

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const LayerSpec& layer(std::size_t i) const { return layers_.at(i); }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  // Parameters are indexed by layer; non-parameterized layers hold empties.
  const std::vector<LayerParams<T>>& params() const noexcept { return params_; }
  const LayerParams<T>& params(std::size_t i) const { return params_.at(i); }
  const ModelMetadata& metadata() const noexcept { return metadata_; }
  const Shape& output_shape(std::size_t i) const { return shapes_.at(i); }

  // Layer whose output is the logit vector: the last layer, or the layer
  // feeding a terminal softmax.
  std::size_t logit_layer() const noexcept { return logit_layer_; }
  // Accepts a layer name or a decimal index.
  std::size_t find_layer(std::string_view id) const;
  std::size_t parameter_count() const;

  ModelGraph with_params(std::vector<LayerParams<T>> params) const;
  ModelGraph with_input_shape(Shape input_shape) const;

  template <typename U>
  ModelGraph<U> cast() const {
    std::vector<LayerParams<U>> p;
    p.reserve(params_.size());
    for (const auto& lp : params_) {
      p.push_back({lp.weight.empty() ? Tensor<U>() : lp.weight.template cast<U>(),
                   lp.bias.empty() ? Tensor<U>() : lp.bias.template cast<U>()});
    }
    return ModelGraph<U>(layers_, std::move(p), metadata_);
  }

  bool operator==(const ModelGraph& other) const {
    return layers_ == other.layers_ && params_ == other.params_ &&
           metadata_ == other.metadata_;
  }

 private:
  std::vector<LayerSpec> layers_;
  std::vector<LayerParams<T>> params_;
  ModelMetadata metadata_;
  std::vector<Shape> shapes_;
  std::size_t logit_layer_ = 0;
};

// Every layer's activation for one input, plus the decoded prediction.
template <typename T>
struct ForwardTrace {
  Tensor<T> input;
  std::vector<Tensor<T>> activations;  // activations[i] = output of layer i
  Tensor<T> logits;
  std::vector<T> probabilities;
  std::size_t predicted = 0;

  const Tensor<T>& output_of(int layer) const {
    return layer == kModelInput ? input : activations.at(static_cast<std::size_t>(layer));
  }
};

template <typename T>
ForwardTrace<T> forward(const ModelGraph<T>& model, const Tensor<T>& input);

// Target-class logit, the differentiation target of every gradient method.
template <typename T>
T class_logit(const ModelGraph<T>& model, const Tensor<T>& input,
              std::size_t target_class);

// Numerically stable softmax (max-shifted exponent).
template <typename T>
std::vector<T> softmax_probabilities(std::span<const T> logits);

// d logit[target_class] / d input.
template <typename T>
Tensor<T> gradient_wrt_input(const ModelGraph<T>& model,
                             const ForwardTrace<T>& trace,
                             std::size_t target_class);

// d logit[target_class] / d output-of-layer. Any layer up to and including
// the logit layer is accepted.
template <typename T>
Tensor<T> gradient_wrt_layer(const ModelGraph<T>& model,
                             const ForwardTrace<T>& trace, std::size_t layer,
                             std::size_t target_class);

// Full reverse pass seeded with d loss / d logits. Returns per-layer
// parameter gradients (empty for non-parameterized layers) and the input
// gradient.
template <typename T>
struct Gradients {
  std::vector<LayerParams<T>> params;
  Tensor<T> input;
};

template <typename T>
Gradients<T> backward(const ModelGraph<T>& model, const ForwardTrace<T>& trace,
                      const Tensor<T>& logit_grad, bool param_grads);

// He-style initialization: weights ~ N(0, 2 / fan_in), zero bias.
template <typename T>
ModelGraph<T> initialize(std::vector<LayerSpec> layers, ModelMetadata metadata,
                         std::uint64_t seed);

// [conv3x3(8)-relu-conv3x3(8)-relu-maxpool] x 2 -> gap -> dense -> softmax.
template <typename T>
ModelGraph<T> make_minivgg(std::size_t input_size, std::size_t num_classes,
                           std::uint64_t seed);

// Same conv depth as MiniVGG at 16 channels with two residual blocks.
template <typename T>
ModelGraph<T> make_miniresnet(std::size_t input_size, std::size_t num_classes,
                              std::uint64_t seed);

template <typename T>
ModelGraph<T> make_model(std::string_view arch, std::size_t input_size,
                         std::size_t num_classes, std::uint64_t seed);

std::vector<std::string> architecture_names();
std::vector<std::string> default_class_names(std::size_t num_classes);

template <typename T>
struct Dataset {
  std::vector<Tensor<T>> images;
  std::vector<std::size_t> labels;
  std::size_t size() const noexcept { return images.size(); }
};

struct TrainOptions {
  std::size_t epochs = 5;
  double learning_rate = 0.03;
  std::size_t batch_size = 2;
  std::uint64_t seed = 0;
};

struct EpochMetrics {
  double loss = 0;
  double accuracy = 0;
};

template <typename T>
struct TrainResult {
  ModelGraph<T> model;
  std::vector<EpochMetrics> epochs;
};

// Mini-batch SGD on softmax cross-entropy. Deterministic given the seed.
template <typename T>
TrainResult<T> train(const ModelGraph<T>& model, const Dataset<T>& data,
                     const TrainOptions& options);

template <typename T>
double accuracy(const ModelGraph<T>& model, const Dataset<T>& data);

// Binary model file; layout documented in docs/model_format.md. Weights are
// stored as little-endian float32, so a float model round-trips bit-exactly.
template <typename T>
void save_model(const ModelGraph<T>& model, const std::filesystem::path& path);
template <typename T>
ModelGraph<T> load_model(const std::filesystem::path& path);

}  // namespace attrib::nn
