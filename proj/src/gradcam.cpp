#include "attrib/gradcam.hpp"

#include <algorithm>
#include <cmath>

namespace attrib {

using nn::LayerKind;

template <typename T>
std::size_t default_gradcam_layer(const nn::ModelGraph<T>& model) {
  std::optional<std::size_t> last_conv;
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    if (model.layer(i).kind == LayerKind::kConv2d) last_conv = i;
  }
  if (!last_conv) throw Error("grad-cam: model has no conv layer");
  std::size_t layer = *last_conv;
  while (layer + 1 < model.layer_count()) {
    const auto next = model.layer(layer + 1).kind;
    if (next != LayerKind::kRelu && next != LayerKind::kResidualAdd) break;
    ++layer;
  }
  return layer;
}

template <typename T>
void require_feature_map_layer(const nn::ModelGraph<T>& model, std::size_t layer) {
  if (layer >= model.layer_count()) {
    throw Error("grad-cam: layer index " + std::to_string(layer) + " out of range");
  }
  std::size_t first_conv = model.layer_count();
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    if (model.layer(i).kind == LayerKind::kConv2d) {
      first_conv = i;
      break;
    }
  }
  if (first_conv == model.layer_count()) {
    throw Error("grad-cam: model has no conv layer");
  }
  if (layer < first_conv || model.output_shape(layer).size() != 3) {
    throw Error("grad-cam: layer '" + model.layer(layer).name +
                "' is not a convolutional feature map");
  }
}

template <typename T>
std::vector<T> channel_weights(const nn::ModelGraph<T>& model,
                               const nn::ForwardTrace<T>& trace,
                               std::size_t layer, std::size_t target_class) {
  require_feature_map_layer(model, layer);
  const auto grad = nn::gradient_wrt_layer(model, trace, layer, target_class);
  const auto pooled = reduce_mean_spatial(grad);
  return pooled.values();
}

template <typename T>
ClassActivationMap<T> grad_cam(const nn::ModelGraph<T>& model,
                               const Tensor<T>& image,
                               const GradCamOptions& options) {
  const std::size_t layer = options.layer ? model.find_layer(*options.layer)
                                          : default_gradcam_layer(model);
  require_feature_map_layer(model, layer);
  const auto trace = nn::forward(model, image);
  const std::size_t target = options.target_class.value_or(trace.predicted);

  ClassActivationMap<T> cam;
  cam.target_class = target;
  cam.layer = layer;
  cam.layer_name = model.layer(layer).name;
  cam.channel_weights = channel_weights(model, trace, layer, target);

  const Tensor<T>& maps = trace.activations[layer];
  const std::size_t channels = maps.dim(0), h = maps.dim(1), w = maps.dim(2);
  const std::size_t plane = h * w;

  auto combine = [&](const std::vector<T>& weights) {
    Tensor<T> out(Shape{h, w});
    for (std::size_t k = 0; k < channels; ++k) {
      const T a = weights[k];
      const T* src = maps.data().data() + k * plane;
      for (std::size_t i = 0; i < plane; ++i) out[i] += a * src[i];
    }
    for (T& v : out.data()) v = v > T{0} ? v : T{0};
    return out;
  };
  cam.raw = combine(cam.channel_weights);

  // The display map is built from weights divided by their largest
  // magnitude. Min-max normalization cancels any positive factor, and the
  // division makes the result independent of the logit scale bit for bit.
  T peak{0};
  for (T a : cam.channel_weights) peak = std::max(peak, std::abs(a));
  std::vector<T> unit(channels, T{0});
  if (peak > T{0}) {
    for (std::size_t k = 0; k < channels; ++k) unit[k] = cam.channel_weights[k] / peak;
  }
  const auto& in = model.metadata().input_shape;
  cam.heatmap = minmax_normalize(bilinear_resize(combine(unit), in[1], in[2]));
  return cam;
}

#define ATTRIB_INSTANTIATE(T)                                                   \
  template std::size_t default_gradcam_layer(const nn::ModelGraph<T>&);         \
  template void require_feature_map_layer(const nn::ModelGraph<T>&, std::size_t); \
  template std::vector<T> channel_weights(const nn::ModelGraph<T>&,             \
                                          const nn::ForwardTrace<T>&,           \
                                          std::size_t, std::size_t);            \
  template ClassActivationMap<T> grad_cam(const nn::ModelGraph<T>&,             \
                                          const Tensor<T>&, const GradCamOptions&);

ATTRIB_INSTANTIATE(float)
ATTRIB_INSTANTIATE(double)

#undef ATTRIB_INSTANTIATE

}  // namespace attrib
