#include "attrib/integrated_gradients.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace attrib {

BaselineKind baseline_from_string(std::string_view name) {
  if (name == "zeros") return BaselineKind::kZeros;
  if (name == "gray") return BaselineKind::kGray;
  if (name == "mean") return BaselineKind::kChannelMean;
  throw Error("unknown baseline '" + std::string(name) + "'; valid: zeros, gray, mean");
}

std::string_view to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kZeros: return "zeros";
    case BaselineKind::kGray: return "gray";
    case BaselineKind::kChannelMean: return "mean";
  }
  return "?";
}

template <typename T>
Tensor<T> make_baseline(BaselineKind kind, const Tensor<T>& image) {
  switch (kind) {
    case BaselineKind::kZeros:
      return Tensor<T>(image.shape());
    case BaselineKind::kGray:
      return Tensor<T>(image.shape(), T(0.5));
    case BaselineKind::kChannelMean: {
      const auto means = reduce_mean_spatial(image);
      Tensor<T> out(image.shape());
      const std::size_t plane = image.dim(1) * image.dim(2);
      for (std::size_t c = 0; c < image.dim(0); ++c) {
        std::fill_n(out.data().begin() + static_cast<std::ptrdiff_t>(c * plane), plane,
                    means[c]);
      }
      return out;
    }
  }
  return Tensor<T>(image.shape());
}

RiemannRule riemann_rule_from_string(std::string_view name) {
  if (name == "midpoint") return RiemannRule::kMidpoint;
  if (name == "right") return RiemannRule::kRight;
  throw Error("unknown riemann rule '" + std::string(name) + "'; valid: midpoint, right");
}

std::string_view to_string(RiemannRule rule) {
  return rule == RiemannRule::kMidpoint ? "midpoint" : "right";
}

namespace {

template <typename T>
Tensor<T> path_point(const Tensor<T>& baseline, const Tensor<T>& image,
                     std::size_t k, std::size_t steps, RiemannRule rule) {
  const double position = rule == RiemannRule::kMidpoint ? static_cast<double>(k) - 0.5
                                                          : static_cast<double>(k);
  const T alpha = static_cast<T>(position / static_cast<double>(steps));
  Tensor<T> x(image.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = baseline[i] + alpha * (image[i] - baseline[i]);
  }
  return x;
}

}  // namespace

template <typename T>
IgResult<T> integrated_gradients(const nn::ModelGraph<T>& model,
                                 const Tensor<T>& image,
                                 const IgParams<T>& params) {
  if (params.steps == 0) throw Error("integrated gradients: steps must be >= 1");
  Tensor<T> baseline = params.baseline ? *params.baseline
                                       : make_baseline(params.baseline_kind, image);
  if (baseline.shape() != image.shape()) {
    throw Error("integrated gradients: baseline shape " +
                shape_string(baseline.shape()) + " differs from input " +
                shape_string(image.shape()));
  }
  const auto input_trace = nn::forward(model, image);
  const std::size_t target = params.target_class.value_or(input_trace.predicted);
  if (target >= model.metadata().num_classes) {
    throw Error("integrated gradients: target class " + std::to_string(target) +
                " out of range");
  }

  auto step_gradient = [&](std::size_t k) {
    const auto x = path_point(baseline, image, k, params.steps, params.rule);
    return nn::gradient_wrt_input(model, nn::forward(model, x), target);
  };

  Tensor<T> sum(image.shape());
  const std::size_t threads = std::clamp<std::size_t>(params.threads, 1, params.steps);
  if (threads == 1) {
    for (std::size_t k = 1; k <= params.steps; ++k) {
      const auto g = step_gradient(k);
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += g[i];
    }
  } else {
    std::vector<Tensor<T>> grads(params.steps);
    {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
          for (std::size_t k = t + 1; k <= params.steps; k += threads) {
            grads[k - 1] = step_gradient(k);
          }
        });
      }
    }
    for (const auto& g : grads) {
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += g[i];
    }
  }

  IgResult<T> result;
  result.attributions = Tensor<T>(image.shape());
  const T inv_steps = T{1} / static_cast<T>(params.steps);
  double total = 0;
  for (std::size_t i = 0; i < sum.size(); ++i) {
    result.attributions[i] = (image[i] - baseline[i]) * (sum[i] * inv_steps);
    total += static_cast<double>(result.attributions[i]);
  }
  require_finite(result.attributions, "integrated gradients");
  result.target_class = target;
  result.steps = params.steps;
  result.logit_input = static_cast<double>(input_trace.logits[target]);
  result.logit_baseline = static_cast<double>(nn::forward(model, baseline).logits[target]);
  result.completeness_gap =
      std::abs(total - (result.logit_input - result.logit_baseline));
  result.baseline = std::move(baseline);
  return result;
}

template <typename T>
double completeness_gap(const nn::ModelGraph<T>& model, const Tensor<T>& image,
                        const IgParams<T>& params) {
  return integrated_gradients(model, image, params).completeness_gap;
}

#define ATTRIB_INSTANTIATE(T)                                                  \
  template Tensor<T> make_baseline(BaselineKind, const Tensor<T>&);            \
  template IgResult<T> integrated_gradients(const nn::ModelGraph<T>&,          \
                                            const Tensor<T>&, const IgParams<T>&); \
  template double completeness_gap(const nn::ModelGraph<T>&, const Tensor<T>&, \
                                   const IgParams<T>&);

ATTRIB_INSTANTIATE(float)
ATTRIB_INSTANTIATE(double)

#undef ATTRIB_INSTANTIATE

}  // namespace attrib
