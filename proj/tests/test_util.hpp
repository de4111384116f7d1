#pragma once

#include <cmath>
#include <random>

#include "attrib/nn.hpp"
#include "attrib/tensor.hpp"

namespace attrib::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0,
                        double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

// Central-difference gradient of the target-class logit with respect to
// every input element. Independent of the reverse pass.
inline Tensor<double> numeric_input_gradient(const nn::ModelGraph<double>& model,
                                             const Tensor<double>& x,
                                             std::size_t target, double h = 1e-4) {
  Tensor<double> grad(x.shape());
  Tensor<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = nn::class_logit(model, probe, target);
    probe[i] = x[i] - h;
    const double down = nn::class_logit(model, probe, target);
    probe[i] = x[i];
    grad[i] = (up - down) / (2 * h);
  }
  return grad;
}

// Max relative error, exempting entries where both magnitudes are < floor.
inline double max_relative_error(const Tensor<double>& analytic,
                                 const Tensor<double>& numeric,
                                 double floor = 1e-8) {
  double worst = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    if (std::abs(a) < floor && std::abs(n) < floor) continue;
    worst = std::max(worst, std::abs(a - n) / std::max(std::abs(a), std::abs(n)));
  }
  return worst;
}

// The layers after `layer` as a standalone model, used to differentiate
// numerically with respect to a feature map.
inline nn::ModelGraph<double> tail_model(const nn::ModelGraph<double>& model, std::size_t layer) {
  std::vector<nn::LayerSpec> layers(model.layers().begin() + static_cast<std::ptrdiff_t>(layer) + 1,
                                model.layers().end());
  std::vector<nn::LayerParams<double>> p(model.params().begin() + static_cast<std::ptrdiff_t>(layer) + 1,
                                     model.params().end());
  auto m = model.metadata();
  m.input_shape = model.output_shape(layer);
  return nn::ModelGraph<double>(std::move(layers), std::move(p), std::move(m));
}

}  // namespace attrib::testing
