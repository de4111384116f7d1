#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "attrib/nn.hpp"

namespace attrib {

template <typename T>
struct ClassActivationMap {
  Tensor<T> raw;      // relu(sum_k a_k A^k), feature-map resolution
  Tensor<T> heatmap;  // raw resized to the input resolution, scaled to [0, 1]
  std::size_t target_class = 0;
  std::size_t layer = 0;
  std::string layer_name;
  std::vector<T> channel_weights;  // a_k
};

struct GradCamOptions {
  std::optional<std::size_t> target_class;  // default: top-predicted
  std::optional<std::string> layer;         // name or index; default below
};

// Last conv layer, extended through any directly following relu /
// residual_add so the map is the activated block output. Throws
// "no conv layer" for models without convolutions.
template <typename T>
std::size_t default_gradcam_layer(const nn::ModelGraph<T>& model);

// Throws unless `layer` outputs a spatial feature map at or after the first
// conv layer.
template <typename T>
void require_feature_map_layer(const nn::ModelGraph<T>& model, std::size_t layer);

// a_k = spatial mean of d logit_c / d A^k.
template <typename T>
std::vector<T> channel_weights(const nn::ModelGraph<T>& model,
                               const nn::ForwardTrace<T>& trace,
                               std::size_t layer, std::size_t target_class);

template <typename T>
ClassActivationMap<T> grad_cam(const nn::ModelGraph<T>& model,
                               const Tensor<T>& image,
                               const GradCamOptions& options = {});

}  // namespace attrib
