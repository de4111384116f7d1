#include "attrib/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace attrib {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_volume(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

namespace {

void check_rank(const Shape& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw Error("tensor rank must be 1..4, got shape " + shape_string(shape));
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_rank(shape_);
  data_.assign(shape_volume(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_rank(shape_);
  if (shape_volume(shape_) != data_.size()) {
    throw Error("tensor shape " + shape_string(shape_) + " needs " +
                std::to_string(shape_volume(shape_)) + " values, got " +
                std::to_string(data_.size()));
  }
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

template <typename T>
void require_finite(const Tensor<T>& t, const std::string& what) {
  for (T v : t.data()) {
    if (!std::isfinite(v)) throw Error(what + ": non-finite value");
  }
}

namespace {

template <typename T>
T apply(ElementOp op, T a, T b) {
  switch (op) {
    case ElementOp::kAdd: return a + b;
    case ElementOp::kSub: return a - b;
    case ElementOp::kMul: return a * b;
    case ElementOp::kDiv: return a / b;
    case ElementOp::kRelu: return a > T{0} ? a : T{0};
    case ElementOp::kExp: return std::exp(a);
  }
  return a;
}

const char* op_name(ElementOp op) {
  switch (op) {
    case ElementOp::kAdd: return "add";
    case ElementOp::kSub: return "sub";
    case ElementOp::kMul: return "mul";
    case ElementOp::kDiv: return "div";
    case ElementOp::kRelu: return "relu";
    case ElementOp::kExp: return "exp";
  }
  return "?";
}

}  // namespace

template <typename T>
Tensor<T> elementwise(ElementOp op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw Error(std::string("elementwise ") + op_name(op) +
                ": shape mismatch " + shape_string(a.shape()) + " vs " +
                shape_string(b.shape()));
  }
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = apply(op, a[i], b[i]);
  require_finite(out, std::string("elementwise ") + op_name(op));
  return out;
}

template <typename T>
Tensor<T> elementwise(ElementOp op, const Tensor<T>& a, T b) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = apply(op, a[i], b);
  require_finite(out, std::string("elementwise ") + op_name(op));
  return out;
}

template <typename T>
Tensor<T> elementwise(ElementOp op, const Tensor<T>& a) {
  return elementwise(op, a, T{0});
}

template <typename T>
Tensor<T> reduce_mean_spatial(const Tensor<T>& t) {
  if (t.rank() != 3) {
    throw Error("reduce_mean_spatial: expected C x H x W, got " +
                shape_string(t.shape()));
  }
  const std::size_t channels = t.dim(0);
  const std::size_t plane = t.dim(1) * t.dim(2);
  if (plane == 0) throw Error("reduce_mean_spatial: empty spatial extent");
  Tensor<T> out(Shape{channels});
  for (std::size_t c = 0; c < channels; ++c) {
    T sum{0};
    const T* p = t.data().data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) sum += p[i];
    out[c] = sum / static_cast<T>(plane);
  }
  return out;
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& t, std::size_t out_h,
                          std::size_t out_w) {
  if (out_h == 0 || out_w == 0) {
    throw Error("bilinear_resize: output extent must be >= 1");
  }
  if (t.rank() != 2 && t.rank() != 3) {
    throw Error("bilinear_resize: expected H x W or C x H x W, got " +
                shape_string(t.shape()));
  }
  const bool planar = t.rank() == 2;
  const std::size_t channels = planar ? 1 : t.dim(0);
  const std::size_t in_h = planar ? t.dim(0) : t.dim(1);
  const std::size_t in_w = planar ? t.dim(1) : t.dim(2);
  if (in_h == 0 || in_w == 0) throw Error("bilinear_resize: empty input");

  // Source coordinate of output index i under align-corners. Exact when the
  // extents match, so the identity resize copies values unchanged.
  auto source = [](std::size_t i, std::size_t in, std::size_t out) {
    if (out == 1 || in == 1) return 0.0;
    return static_cast<double>(i * (in - 1)) / static_cast<double>(out - 1);
  };
  std::vector<std::size_t> y0(out_h), y1(out_h), x0(out_w), x1(out_w);
  std::vector<T> fy(out_h), fx(out_w);
  for (std::size_t i = 0; i < out_h; ++i) {
    const double s = source(i, in_h, out_h);
    y0[i] = std::min(static_cast<std::size_t>(s), in_h - 1);
    y1[i] = std::min(y0[i] + 1, in_h - 1);
    fy[i] = static_cast<T>(s - static_cast<double>(y0[i]));
  }
  for (std::size_t j = 0; j < out_w; ++j) {
    const double s = source(j, in_w, out_w);
    x0[j] = std::min(static_cast<std::size_t>(s), in_w - 1);
    x1[j] = std::min(x0[j] + 1, in_w - 1);
    fx[j] = static_cast<T>(s - static_cast<double>(x0[j]));
  }

  // Each 1-D blend is clamped to its two endpoints so rounding can never
  // push a value outside the input range.
  auto lerp = [](T a, T b, T f) {
    const T v = a * (T{1} - f) + b * f;
    return std::clamp(v, std::min(a, b), std::max(a, b));
  };

  Shape out_shape = planar ? Shape{out_h, out_w} : Shape{channels, out_h, out_w};
  Tensor<T> out(out_shape);
  const auto src = t.data();
  auto dst = out.data();
  for (std::size_t c = 0; c < channels; ++c) {
    const T* in = src.data() + c * in_h * in_w;
    T* o = dst.data() + c * out_h * out_w;
    for (std::size_t i = 0; i < out_h; ++i) {
      const T* r0 = in + y0[i] * in_w;
      const T* r1 = in + y1[i] * in_w;
      for (std::size_t j = 0; j < out_w; ++j) {
        const T top = lerp(r0[x0[j]], r0[x1[j]], fx[j]);
        const T bottom = lerp(r1[x0[j]], r1[x1[j]], fx[j]);
        o[i * out_w + j] = lerp(top, bottom, fy[i]);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> minmax_normalize(const Tensor<T>& t) {
  Tensor<T> out(t.shape());
  if (t.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(t.data().begin(), t.data().end());
  const T lo = *lo_it;
  const T range = *hi_it - lo;
  if (!(range > T{0})) return out;
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = (t[i] - lo) / range;
  return out;
}

#define ATTRIB_INSTANTIATE(T)                                                  \
  template class Tensor<T>;                                                    \
  template Tensor<T> elementwise(ElementOp, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> elementwise(ElementOp, const Tensor<T>&, T);              \
  template Tensor<T> elementwise(ElementOp, const Tensor<T>&);                 \
  template Tensor<T> reduce_mean_spatial(const Tensor<T>&);                    \
  template Tensor<T> bilinear_resize(const Tensor<T>&, std::size_t, std::size_t); \
  template Tensor<T> minmax_normalize(const Tensor<T>&);                       \
  template void require_finite(const Tensor<T>&, const std::string&);

ATTRIB_INSTANTIATE(float)
ATTRIB_INSTANTIATE(double)

#undef ATTRIB_INSTANTIATE

}  // namespace attrib
