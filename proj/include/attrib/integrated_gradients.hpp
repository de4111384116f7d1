#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string_view>

#include "attrib/nn.hpp"

namespace attrib {

enum class BaselineKind {
  kZeros,        // black image
  kGray,         // 0.5 everywhere
  kChannelMean,  // per-channel mean of the explained image
};

BaselineKind baseline_from_string(std::string_view name);
std::string_view to_string(BaselineKind kind);

// Where each of the m path gradients is taken: alpha_k = (k - 1/2) / m or
// alpha_k = k / m, k = 1..m.
enum class RiemannRule { kMidpoint, kRight };

RiemannRule riemann_rule_from_string(std::string_view name);
std::string_view to_string(RiemannRule rule);

template <typename T>
Tensor<T> make_baseline(BaselineKind kind, const Tensor<T>& image);

template <typename T>
struct IgParams {
  std::size_t steps = 50;
  BaselineKind baseline_kind = BaselineKind::kZeros;
  RiemannRule rule = RiemannRule::kMidpoint;
  std::optional<Tensor<T>> baseline;        // overrides baseline_kind
  std::optional<std::size_t> target_class;  // default: top-predicted
  std::size_t threads = 1;
};

template <typename T>
struct IgResult {
  Tensor<T> attributions;  // input-shaped, signed, per pixel per channel
  double completeness_gap = 0;  // |sum(attributions) - (F(x) - F(x'))|
  double logit_input = 0;       // F(x)
  double logit_baseline = 0;    // F(x')
  std::size_t target_class = 0;
  std::size_t steps = 0;
  Tensor<T> baseline;

  double relative_gap() const {
    const double delta = std::abs(logit_input - logit_baseline);
    return delta > 0 ? completeness_gap / delta : completeness_gap;
  }
};

// IG_i = (x_i - x'_i) * (1/m) sum_{k=1..m} dF/dx_i at x' + alpha_k (x - x'),
// where F is the target-class logit. Gradients are reduced in step order,
// so the result does not depend on `threads`.
template <typename T>
IgResult<T> integrated_gradients(const nn::ModelGraph<T>& model,
                                 const Tensor<T>& image,
                                 const IgParams<T>& params = {});

template <typename T>
double completeness_gap(const nn::ModelGraph<T>& model, const Tensor<T>& image,
                        const IgParams<T>& params = {});

}  // namespace attrib
