#include "attrib/nn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>

namespace attrib::nn {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kMaxPool2x2: return "maxpool2x2";
    case LayerKind::kGlobalAvgPool: return "global_avg_pool";
    case LayerKind::kDense: return "dense";
    case LayerKind::kSoftmax: return "softmax";
    case LayerKind::kResidualAdd: return "residual_add";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (auto kind : {LayerKind::kConv2d, LayerKind::kRelu, LayerKind::kMaxPool2x2,
                    LayerKind::kGlobalAvgPool, LayerKind::kDense,
                    LayerKind::kSoftmax, LayerKind::kResidualAdd}) {
    if (to_string(kind) == name) return kind;
  }
  throw Error("unknown layer kind '" + std::string(name) + "'");
}

LayerSpec conv2d(std::string name, std::size_t in, std::size_t out,
                 std::size_t kernel, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::kConv2d;
  s.name = std::move(name);
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = kernel;
  s.stride = stride;
  return s;
}

LayerSpec dense(std::string name, std::size_t in, std::size_t out) {
  LayerSpec s;
  s.kind = LayerKind::kDense;
  s.name = std::move(name);
  s.in_channels = in;
  s.out_channels = out;
  return s;
}

namespace {

LayerSpec plain(LayerKind kind, std::string name) {
  LayerSpec s;
  s.kind = kind;
  s.name = std::move(name);
  return s;
}

}  // namespace

LayerSpec relu(std::string name) { return plain(LayerKind::kRelu, std::move(name)); }
LayerSpec maxpool2x2(std::string name) {
  return plain(LayerKind::kMaxPool2x2, std::move(name));
}
LayerSpec global_avg_pool(std::string name) {
  return plain(LayerKind::kGlobalAvgPool, std::move(name));
}
LayerSpec softmax(std::string name) {
  return plain(LayerKind::kSoftmax, std::move(name));
}
LayerSpec residual_add(std::string name, int skip) {
  LayerSpec s = plain(LayerKind::kResidualAdd, std::move(name));
  s.skip = skip;
  return s;
}

std::vector<std::string> default_class_names(std::size_t num_classes) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < num_classes; ++i) {
    names.push_back("class_" + std::to_string(i));
  }
  return names;
}

// ---------------------------------------------------------------------------
// Graph validation

namespace {

std::string where(std::size_t i, const LayerSpec& s) {
  return "layer " + std::to_string(i) + " ('" + s.name + "')";
}

Shape infer_shape(std::size_t i, const LayerSpec& s, const Shape& in,
                  const std::vector<Shape>& shapes, const Shape& model_input) {
  auto need_rank3 = [&] {
    if (in.size() != 3) {
      throw Error(where(i, s) + ": expected C x H x W input, got " +
                  shape_string(in));
    }
  };
  switch (s.kind) {
    case LayerKind::kConv2d: {
      need_rank3();
      if (s.kernel == 0 || s.kernel % 2 == 0 || s.stride == 0 ||
          s.out_channels == 0) {
        throw Error(where(i, s) + ": conv needs an odd kernel, stride >= 1 "
                    "and at least one filter");
      }
      if (in[0] != s.in_channels) {
        throw Error(where(i, s) + ": expects " + std::to_string(s.in_channels) +
                    " input channels, receives " + std::to_string(in[0]));
      }
      const std::size_t pad = s.kernel / 2;
      const std::size_t oh = (in[1] + 2 * pad - s.kernel) / s.stride + 1;
      const std::size_t ow = (in[2] + 2 * pad - s.kernel) / s.stride + 1;
      return {s.out_channels, oh, ow};
    }
    case LayerKind::kRelu:
      return in;
    case LayerKind::kMaxPool2x2:
      need_rank3();
      if (in[1] < 2 || in[2] < 2) {
        throw Error(where(i, s) + ": spatial extent " + shape_string(in) +
                    " too small for 2x2 pooling");
      }
      return {in[0], in[1] / 2, in[2] / 2};
    case LayerKind::kGlobalAvgPool:
      need_rank3();
      return {in[0]};
    case LayerKind::kDense:
      if (shape_volume(in) != s.in_channels || s.out_channels == 0) {
        throw Error(where(i, s) + ": expects " + std::to_string(s.in_channels) +
                    " input features, receives " + shape_string(in));
      }
      return {s.out_channels};
    case LayerKind::kSoftmax:
      if (in.size() != 1) {
        throw Error(where(i, s) + ": softmax needs a vector input, got " +
                    shape_string(in));
      }
      return in;
    case LayerKind::kResidualAdd: {
      if (s.skip < kModelInput || s.skip >= static_cast<int>(i) - 1) {
        throw Error(where(i, s) + ": residual edge must reference an earlier "
                    "layer other than its direct input, got " +
                    std::to_string(s.skip));
      }
      const Shape& other =
          s.skip == kModelInput ? model_input : shapes[static_cast<std::size_t>(s.skip)];
      if (other != in) {
        throw Error(where(i, s) + ": residual operands differ, " +
                    shape_string(in) + " vs " + shape_string(other));
      }
      return in;
    }
  }
  return in;
}

template <typename T>
void check_params(std::size_t i, const LayerSpec& s, const LayerParams<T>& p) {
  if (!s.has_params()) {
    if (!p.weight.empty() || !p.bias.empty()) {
      throw Error(where(i, s) + ": " + std::string(to_string(s.kind)) +
                  " takes no weights");
    }
    return;
  }
  const Shape w = s.kind == LayerKind::kConv2d
                      ? Shape{s.out_channels, s.in_channels, s.kernel, s.kernel}
                      : Shape{s.out_channels, s.in_channels};
  if (p.weight.shape() != w) {
    throw Error(where(i, s) + ": weight shape " + shape_string(p.weight.shape()) +
                ", expected " + shape_string(w));
  }
  if (p.bias.shape() != Shape{s.out_channels}) {
    throw Error(where(i, s) + ": bias shape " + shape_string(p.bias.shape()) +
                ", expected " + shape_string({s.out_channels}));
  }
  require_finite(p.weight, where(i, s) + " weight");
  require_finite(p.bias, where(i, s) + " bias");
}

}  // namespace

template <typename T>
ModelGraph<T>::ModelGraph(std::vector<LayerSpec> layers,
                          std::vector<LayerParams<T>> params,
                          ModelMetadata metadata)
    : layers_(std::move(layers)),
      params_(std::move(params)),
      metadata_(std::move(metadata)) {
  if (layers_.empty()) throw Error("model has no layers");
  if (params_.size() != layers_.size()) {
    throw Error("model has " + std::to_string(layers_.size()) + " layers but " +
                std::to_string(params_.size()) + " parameter slots");
  }
  if (metadata_.input_shape.size() != 3) {
    throw Error("model input shape must be C x H x W, got " +
                shape_string(metadata_.input_shape));
  }
  if (metadata_.class_names.empty()) {
    metadata_.class_names = default_class_names(metadata_.num_classes);
  }
  if (metadata_.class_names.size() != metadata_.num_classes) {
    throw Error("model declares " + std::to_string(metadata_.num_classes) +
                " classes but " + std::to_string(metadata_.class_names.size()) +
                " class names");
  }
  shapes_.reserve(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& s = layers_[i];
    if (s.kind == LayerKind::kSoftmax && i + 1 != layers_.size()) {
      throw Error(where(i, s) + ": softmax is only allowed as the final layer");
    }
    const Shape& in = i == 0 ? metadata_.input_shape : shapes_[i - 1];
    shapes_.push_back(infer_shape(i, s, in, shapes_, metadata_.input_shape));
    check_params(i, s, params_[i]);
  }
  logit_layer_ = layers_.back().kind == LayerKind::kSoftmax && layers_.size() > 1
                     ? layers_.size() - 2
                     : layers_.size() - 1;
  if (layers_.back().kind == LayerKind::kSoftmax && layers_.size() == 1) {
    throw Error("model consists of a lone softmax");
  }
  if (shapes_[logit_layer_] != Shape{metadata_.num_classes}) {
    throw Error("logit layer output " + shape_string(shapes_[logit_layer_]) +
                " does not match " + std::to_string(metadata_.num_classes) +
                " classes");
  }
}

template <typename T>
std::size_t ModelGraph<T>::find_layer(std::string_view id) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].name == id) return i;
  }
  std::size_t index = 0;
  const auto* end = id.data() + id.size();
  auto [ptr, ec] = std::from_chars(id.data(), end, index);
  if (ec == std::errc() && ptr == end && index < layers_.size()) return index;
  throw Error("no layer '" + std::string(id) + "' in model");
}

template <typename T>
std::size_t ModelGraph<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.weight.size() + p.bias.size();
  return n;
}

template <typename T>
ModelGraph<T> ModelGraph<T>::with_params(std::vector<LayerParams<T>> params) const {
  return ModelGraph(layers_, std::move(params), metadata_);
}

template <typename T>
ModelGraph<T> ModelGraph<T>::with_input_shape(Shape input_shape) const {
  ModelMetadata m = metadata_;
  m.input_shape = std::move(input_shape);
  return ModelGraph(layers_, params_, std::move(m));
}

// ---------------------------------------------------------------------------
// Layer kernels. All operate on a single C x H x W image.

namespace {

struct ConvGeometry {
  std::size_t in_c, in_h, in_w, out_c, out_h, out_w, k, stride, pad;

  // Output columns ox whose source column ox*stride + kx - pad is in range.
  std::pair<std::size_t, std::size_t> columns(std::size_t kx) const {
    std::size_t lo = 0;
    if (kx < pad) lo = (pad - kx + stride - 1) / stride;
    const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(in_w) - 1 +
                                static_cast<std::ptrdiff_t>(pad) -
                                static_cast<std::ptrdiff_t>(kx);
    if (last < 0) return {0, 0};
    const std::size_t hi =
        std::min(out_w, static_cast<std::size_t>(last) / stride + 1);
    return {lo, std::max(lo, hi)};
  }
};

ConvGeometry geometry(const LayerSpec& s, const Shape& in, const Shape& out) {
  return {in[0], in[1], in[2], out[0], out[1], out[2], s.kernel, s.stride,
          s.kernel / 2};
}

template <typename T>
void conv_forward(const ConvGeometry& g, const T* in, const T* weight,
                  const T* bias, T* out) {
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t co = 0; co < g.out_c; ++co) {
    T* o = out + co * plane;
    std::fill(o, o + plane, bias[co]);
    for (std::size_t ci = 0; ci < g.in_c; ++ci) {
      const T* src = in + ci * g.in_h * g.in_w;
      const T* w = weight + (co * g.in_c + ci) * g.k * g.k;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const T wv = w[ky * g.k + kx];
          const auto [lo, hi] = g.columns(kx);
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
            T* orow = o + oy * g.out_w;
            const T* irow = src + static_cast<std::size_t>(iy) * g.in_w;
            if (g.stride == 1) {
              const T* shifted = irow + kx - g.pad;
              for (std::size_t ox = lo; ox < hi; ++ox) orow[ox] += wv * shifted[ox];
            } else {
              for (std::size_t ox = lo; ox < hi; ++ox) {
                orow[ox] += wv * irow[ox * g.stride + kx - g.pad];
              }
            }
          }
        }
      }
    }
  }
}

// Accumulates d/d input into grad_in and, when grad_w is non-null, d/d weight
// and d/d bias into grad_w / grad_b.
template <typename T>
void conv_backward(const ConvGeometry& g, const T* in, const T* weight,
                   const T* grad_out, T* grad_in, T* grad_w, T* grad_b) {
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t co = 0; co < g.out_c; ++co) {
    const T* go = grad_out + co * plane;
    if (grad_b) {
      T sum{0};
      for (std::size_t i = 0; i < plane; ++i) sum += go[i];
      grad_b[co] += sum;
    }
    for (std::size_t ci = 0; ci < g.in_c; ++ci) {
      const T* src = in + ci * g.in_h * g.in_w;
      T* gi = grad_in ? grad_in + ci * g.in_h * g.in_w : nullptr;
      const std::size_t wbase = (co * g.in_c + ci) * g.k * g.k;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const T wv = weight[wbase + ky * g.k + kx];
          const auto [lo, hi] = g.columns(kx);
          T wsum{0};
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
            const T* grow = go + oy * g.out_w;
            const std::size_t row = static_cast<std::size_t>(iy) * g.in_w;
            if (g.stride == 1) {
              const std::size_t shift = kx - g.pad;  // wraps; only used as offset
              if (gi) {
                T* girow = gi + row + shift;
                for (std::size_t ox = lo; ox < hi; ++ox) girow[ox] += wv * grow[ox];
              }
              if (grad_w) {
                const T* irow = src + row + shift;
                for (std::size_t ox = lo; ox < hi; ++ox) wsum += grow[ox] * irow[ox];
              }
            } else {
              for (std::size_t ox = lo; ox < hi; ++ox) {
                const std::size_t ix = ox * g.stride + kx - g.pad;
                if (gi) gi[row + ix] += wv * grow[ox];
                if (grad_w) wsum += grow[ox] * src[row + ix];
              }
            }
          }
          if (grad_w) grad_w[wbase + ky * g.k + kx] += wsum;
        }
      }
    }
  }
}

template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& in, const Shape& out_shape) {
  Tensor<T> out(out_shape);
  const std::size_t h = in.dim(1), w = in.dim(2);
  for (std::size_t c = 0; c < out_shape[0]; ++c) {
    for (std::size_t y = 0; y < out_shape[1]; ++y) {
      for (std::size_t x = 0; x < out_shape[2]; ++x) {
        const T* p = in.data().data() + (c * h + 2 * y) * w + 2 * x;
        out.at(c, y, x) = std::max(std::max(p[0], p[1]), std::max(p[w], p[w + 1]));
      }
    }
  }
  return out;
}

// Routes each pooled gradient to the first maximal input of its window.
template <typename T>
void maxpool_backward(const Tensor<T>& in, const Tensor<T>& grad_out,
                      Tensor<T>& grad_in) {
  const std::size_t h = in.dim(1), w = in.dim(2);
  for (std::size_t c = 0; c < grad_out.dim(0); ++c) {
    for (std::size_t y = 0; y < grad_out.dim(1); ++y) {
      for (std::size_t x = 0; x < grad_out.dim(2); ++x) {
        const std::size_t base = (c * h + 2 * y) * w + 2 * x;
        const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = cand[0];
        for (std::size_t k = 1; k < 4; ++k) {
          if (in[cand[k]] > in[best]) best = cand[k];
        }
        grad_in[best] += grad_out.at(c, y, x);
      }
    }
  }
}

template <typename T>
void add_into(Tensor<T>& acc, const Tensor<T>& g) {
  if (acc.empty()) {
    acc = g;
    return;
  }
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

}  // namespace

template <typename T>
std::vector<T> softmax_probabilities(std::span<const T> logits) {
  std::vector<T> p(logits.size());
  if (logits.empty()) return p;
  const T shift = *std::max_element(logits.begin(), logits.end());
  T sum{0};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - shift);
    sum += p[i];
  }
  for (T& v : p) v /= sum;
  return p;
}

template <typename T>
ForwardTrace<T> forward(const ModelGraph<T>& model, const Tensor<T>& input) {
  if (input.shape() != model.metadata().input_shape) {
    throw Error("input shape " + shape_string(input.shape()) +
                " does not match model input " +
                shape_string(model.metadata().input_shape) + " at layer 0 ('" +
                model.layer(0).name + "')");
  }
  ForwardTrace<T> trace;
  trace.input = input;
  trace.activations.reserve(model.layer_count());
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    const LayerSpec& s = model.layer(i);
    const Tensor<T>& in = i == 0 ? trace.input : trace.activations[i - 1];
    const Shape& out_shape = model.output_shape(i);
    Tensor<T> out;
    switch (s.kind) {
      case LayerKind::kConv2d: {
        out = Tensor<T>(out_shape);
        const auto& p = model.params(i);
        conv_forward(geometry(s, in.shape(), out_shape), in.data().data(),
                     p.weight.data().data(), p.bias.data().data(), out.data().data());
        break;
      }
      case LayerKind::kRelu:
        out = in;
        for (T& v : out.data()) v = v > T{0} ? v : T{0};
        break;
      case LayerKind::kMaxPool2x2:
        out = maxpool_forward(in, out_shape);
        break;
      case LayerKind::kGlobalAvgPool:
        out = reduce_mean_spatial(in);
        break;
      case LayerKind::kDense: {
        const auto& p = model.params(i);
        out = Tensor<T>(out_shape);
        const std::size_t n_in = s.in_channels;
        const T* w = p.weight.data().data();
        for (std::size_t o = 0; o < s.out_channels; ++o) {
          T sum = p.bias[o];
          for (std::size_t k = 0; k < n_in; ++k) sum += w[o * n_in + k] * in[k];
          out[o] = sum;
        }
        break;
      }
      case LayerKind::kSoftmax:
        out = Tensor<T>(out_shape, softmax_probabilities<T>(in.data()));
        break;
      case LayerKind::kResidualAdd: {
        out = in;
        const Tensor<T>& other = trace.output_of(s.skip);
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += other[k];
        break;
      }
    }
    trace.activations.push_back(std::move(out));
  }
  trace.logits = trace.activations[model.logit_layer()];
  require_finite(trace.logits, "forward logits");
  trace.probabilities = softmax_probabilities<T>(trace.logits.data());
  trace.predicted = static_cast<std::size_t>(
      std::max_element(trace.logits.data().begin(), trace.logits.data().end()) -
      trace.logits.data().begin());
  return trace;
}

template <typename T>
T class_logit(const ModelGraph<T>& model, const Tensor<T>& input,
              std::size_t target_class) {
  if (target_class >= model.metadata().num_classes) {
    throw Error("target class " + std::to_string(target_class) +
                " out of range for " + std::to_string(model.metadata().num_classes) +
                " classes");
  }
  return forward(model, input).logits[target_class];
}

namespace {

// Reverse pass from `start` (seeded with d/d output-of-start) down to the
// output of `stop` (kModelInput for the input). Returns the gradient with
// respect to the output of `stop`.
template <typename T>
Tensor<T> backpropagate(const ModelGraph<T>& model, const ForwardTrace<T>& trace,
                        std::size_t start, Tensor<T> seed, int stop,
                        std::vector<LayerParams<T>>* param_grads) {
  if (trace.activations.size() != model.layer_count()) {
    throw Error("trace does not belong to this model");
  }
  std::vector<Tensor<T>> grads(model.layer_count());
  Tensor<T> input_grad;
  grads[start] = std::move(seed);
  auto slot = [&](int layer) -> Tensor<T>& {
    return layer == kModelInput ? input_grad : grads[static_cast<std::size_t>(layer)];
  };

  for (std::ptrdiff_t li = static_cast<std::ptrdiff_t>(start); li > stop; --li) {
    const std::size_t i = static_cast<std::size_t>(li);
    Tensor<T>& g = grads[i];
    if (g.empty()) continue;
    const LayerSpec& s = model.layer(i);
    const int below = static_cast<int>(i) - 1;
    const Tensor<T>& in = trace.output_of(below);
    switch (s.kind) {
      case LayerKind::kConv2d: {
        const auto& p = model.params(i);
        T* gw = nullptr;
        T* gb = nullptr;
        if (param_grads) {
          auto& pg = (*param_grads)[i];
          gw = pg.weight.data().data();
          gb = pg.bias.data().data();
        }
        Tensor<T> gin(in.shape());
        conv_backward(geometry(s, in.shape(), g.shape()), in.data().data(),
                      p.weight.data().data(), g.data().data(),
                      gin.data().data(), gw, gb);
        add_into(slot(below), gin);
        break;
      }
      case LayerKind::kRelu: {
        Tensor<T> gin(in.shape());
        for (std::size_t k = 0; k < gin.size(); ++k) {
          gin[k] = in[k] > T{0} ? g[k] : T{0};
        }
        add_into(slot(below), gin);
        break;
      }
      case LayerKind::kMaxPool2x2: {
        Tensor<T> gin(in.shape());
        maxpool_backward(in, g, gin);
        add_into(slot(below), gin);
        break;
      }
      case LayerKind::kGlobalAvgPool: {
        Tensor<T> gin(in.shape());
        const std::size_t plane = in.dim(1) * in.dim(2);
        for (std::size_t c = 0; c < in.dim(0); ++c) {
          const T v = g[c] / static_cast<T>(plane);
          std::fill_n(gin.data().begin() + static_cast<std::ptrdiff_t>(c * plane),
                      plane, v);
        }
        add_into(slot(below), gin);
        break;
      }
      case LayerKind::kDense: {
        const auto& p = model.params(i);
        const std::size_t n_in = s.in_channels;
        const T* w = p.weight.data().data();
        if (param_grads) {
          auto& pg = (*param_grads)[i];
          for (std::size_t o = 0; o < s.out_channels; ++o) {
            pg.bias[o] += g[o];
            for (std::size_t k = 0; k < n_in; ++k) {
              pg.weight[o * n_in + k] += g[o] * in[k];
            }
          }
        }
        Tensor<T> gin(in.shape());
        for (std::size_t o = 0; o < s.out_channels; ++o) {
          const T go = g[o];
          for (std::size_t k = 0; k < n_in; ++k) gin[k] += w[o * n_in + k] * go;
        }
        add_into(slot(below), gin);
        break;
      }
      case LayerKind::kSoftmax:
        // Unreachable: reverse passes start at the logit layer, below any
        // terminal softmax.
        break;
      case LayerKind::kResidualAdd:
        add_into(slot(below), g);
        if (s.skip >= stop) add_into(slot(s.skip), g);
        break;
    }
  }
  Tensor<T>& result = slot(stop);
  if (result.empty()) {
    result = Tensor<T>(stop == kModelInput ? trace.input.shape()
                                           : trace.activations[static_cast<std::size_t>(stop)].shape());
  }
  return std::move(result);
}

template <typename T>
Tensor<T> one_hot_seed(const ModelGraph<T>& model, std::size_t target_class) {
  const std::size_t n = model.metadata().num_classes;
  if (target_class >= n) {
    throw Error("target class " + std::to_string(target_class) +
                " out of range for " + std::to_string(n) + " classes");
  }
  Tensor<T> seed(Shape{n});
  seed[target_class] = T{1};
  return seed;
}

}  // namespace

template <typename T>
Tensor<T> gradient_wrt_input(const ModelGraph<T>& model,
                             const ForwardTrace<T>& trace,
                             std::size_t target_class) {
  return backpropagate<T>(model, trace, model.logit_layer(),
                       one_hot_seed(model, target_class), kModelInput, nullptr);
}

template <typename T>
Tensor<T> gradient_wrt_layer(const ModelGraph<T>& model,
                             const ForwardTrace<T>& trace, std::size_t layer,
                             std::size_t target_class) {
  if (layer > model.logit_layer()) {
    throw Error("layer " + std::to_string(layer) + " ('" +
                (layer < model.layer_count() ? model.layer(layer).name : "?") +
                "') lies after the logit layer");
  }
  Tensor<T> seed = one_hot_seed(model, target_class);
  if (layer == model.logit_layer()) return seed;
  return backpropagate<T>(model, trace, model.logit_layer(), std::move(seed),
                       static_cast<int>(layer), nullptr);
}

template <typename T>
Gradients<T> backward(const ModelGraph<T>& model, const ForwardTrace<T>& trace,
                      const Tensor<T>& logit_grad, bool param_grads) {
  if (logit_grad.shape() != Shape{model.metadata().num_classes}) {
    throw Error("logit gradient shape " + shape_string(logit_grad.shape()) +
                " does not match the model's class count");
  }
  Gradients<T> out;
  if (param_grads) {
    out.params.resize(model.layer_count());
    for (std::size_t i = 0; i < model.layer_count(); ++i) {
      const auto& p = model.params(i);
      if (p.weight.empty()) continue;
      out.params[i] = {Tensor<T>(p.weight.shape()), Tensor<T>(p.bias.shape())};
    }
  }
  out.input = backpropagate(model, trace, model.logit_layer(), logit_grad,
                            kModelInput, param_grads ? &out.params : nullptr);
  return out;
}

// ---------------------------------------------------------------------------
// Construction

template <typename T>
ModelGraph<T> initialize(std::vector<LayerSpec> layers, ModelMetadata metadata,
                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LayerParams<T>> params(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& s = layers[i];
    if (!s.has_params()) continue;
    const bool conv = s.kind == LayerKind::kConv2d;
    const std::size_t fan_in = conv ? s.in_channels * s.kernel * s.kernel : s.in_channels;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    Shape wshape = conv ? Shape{s.out_channels, s.in_channels, s.kernel, s.kernel}
                        : Shape{s.out_channels, s.in_channels};
    Tensor<T> w(wshape);
    // Rounded through float so every freshly built model survives a save/load
    // cycle bit-exactly, whatever T is.
    for (T& v : w.data()) v = static_cast<T>(static_cast<float>(dist(rng)));
    params[i] = {std::move(w), Tensor<T>(Shape{s.out_channels})};
  }
  return ModelGraph<T>(std::move(layers), std::move(params), std::move(metadata));
}

namespace {

ModelMetadata image_metadata(std::string arch, std::size_t input_size,
                             std::size_t num_classes) {
  return {std::move(arch), {3, input_size, input_size}, num_classes,
          default_class_names(num_classes)};
}

}  // namespace

template <typename T>
ModelGraph<T> make_minivgg(std::size_t input_size, std::size_t num_classes,
                           std::uint64_t seed) {
  constexpr std::size_t c = 8;
  std::vector<LayerSpec> layers = {
      conv2d("conv1", 3, c), relu("relu1"), conv2d("conv2", c, c), relu("relu2"),
      maxpool2x2("pool1"),
      conv2d("conv3", c, c), relu("relu3"), conv2d("conv4", c, c), relu("relu4"),
      maxpool2x2("pool2"),
      global_avg_pool("gap"), dense("fc", c, num_classes), softmax("softmax"),
  };
  return initialize<T>(std::move(layers),
                       image_metadata("minivgg", input_size, num_classes), seed);
}

template <typename T>
ModelGraph<T> make_miniresnet(std::size_t input_size, std::size_t num_classes,
                              std::uint64_t seed) {
  constexpr std::size_t c = 16;
  std::vector<LayerSpec> layers = {
      conv2d("conv1", 3, c), relu("relu1"),
      conv2d("conv2", c, c), residual_add("add1", 1), relu("relu2"),
      maxpool2x2("pool1"),
      conv2d("conv3", c, c), relu("relu3"),
      conv2d("conv4", c, c), residual_add("add2", 5), relu("relu4"),
      maxpool2x2("pool2"),
      global_avg_pool("gap"), dense("fc", c, num_classes), softmax("softmax"),
  };
  return initialize<T>(std::move(layers),
                       image_metadata("miniresnet", input_size, num_classes), seed);
}

std::vector<std::string> architecture_names() { return {"minivgg", "miniresnet"}; }

template <typename T>
ModelGraph<T> make_model(std::string_view arch, std::size_t input_size,
                         std::size_t num_classes, std::uint64_t seed) {
  if (arch == "minivgg") return make_minivgg<T>(input_size, num_classes, seed);
  if (arch == "miniresnet") return make_miniresnet<T>(input_size, num_classes, seed);
  throw Error("unknown model '" + std::string(arch) +
              "'; valid models: minivgg, miniresnet");
}

#define ATTRIB_INSTANTIATE(T)                                                   \
  template class ModelGraph<T>;                                                 \
  template std::vector<T> softmax_probabilities(std::span<const T>);            \
  template ForwardTrace<T> forward(const ModelGraph<T>&, const Tensor<T>&);     \
  template T class_logit(const ModelGraph<T>&, const Tensor<T>&, std::size_t);  \
  template Tensor<T> gradient_wrt_input(const ModelGraph<T>&,                   \
                                        const ForwardTrace<T>&, std::size_t);   \
  template Tensor<T> gradient_wrt_layer(const ModelGraph<T>&,                   \
                                        const ForwardTrace<T>&, std::size_t,    \
                                        std::size_t);                           \
  template Gradients<T> backward(const ModelGraph<T>&, const ForwardTrace<T>&,  \
                                 const Tensor<T>&, bool);                       \
  template ModelGraph<T> initialize(std::vector<LayerSpec>, ModelMetadata,      \
                                    std::uint64_t);                             \
  template ModelGraph<T> make_minivgg(std::size_t, std::size_t, std::uint64_t); \
  template ModelGraph<T> make_miniresnet(std::size_t, std::size_t,              \
                                         std::uint64_t);                        \
  template ModelGraph<T> make_model(std::string_view, std::size_t,              \
                                    std::size_t, std::uint64_t);

ATTRIB_INSTANTIATE(float)
ATTRIB_INSTANTIATE(double)

#undef ATTRIB_INSTANTIATE

}  // namespace attrib::nn
