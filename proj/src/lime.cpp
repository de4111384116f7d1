#include "attrib/lime.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

namespace attrib::lime {

SegmentationMethod segmentation_from_string(std::string_view name) {
  if (name == "grid") return SegmentationMethod::kGrid;
  if (name == "slic") return SegmentationMethod::kSlic;
  throw Error("unknown segmentation '" + std::string(name) + "'; valid: grid, slic");
}

std::string_view to_string(SegmentationMethod method) {
  return method == SegmentationMethod::kGrid ? "grid" : "slic";
}

std::vector<std::size_t> SegmentMap::pixel_counts() const {
  std::vector<std::size_t> counts(count, 0);
  for (auto id : labels) {
    if (id < count) ++counts[id];
  }
  return counts;
}

namespace {

// 4-connected component labeling of `labels`; returns the number of
// components and fills `component` with a component id per pixel.
std::size_t connected_components(std::size_t h, std::size_t w,
                                 const std::vector<std::uint32_t>& labels,
                                 std::vector<std::uint32_t>& component) {
  constexpr auto kUnset = std::numeric_limits<std::uint32_t>::max();
  component.assign(h * w, kUnset);
  std::vector<std::size_t> stack;
  std::uint32_t next = 0;
  for (std::size_t start = 0; start < h * w; ++start) {
    if (component[start] != kUnset) continue;
    component[start] = next;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t y = p / w, x = p % w;
      auto visit = [&](std::size_t q) {
        if (component[q] == kUnset && labels[q] == labels[p]) {
          component[q] = next;
          stack.push_back(q);
        }
      };
      if (x > 0) visit(p - 1);
      if (x + 1 < w) visit(p + 1);
      if (y > 0) visit(p - w);
      if (y + 1 < h) visit(p + w);
    }
    ++next;
  }
  return next;
}

}  // namespace

void validate_segments(const SegmentMap& s) {
  if (s.labels.size() != s.height * s.width || s.labels.empty()) {
    throw Error("segment map: label count does not match its dimensions");
  }
  const auto counts = s.pixel_counts();
  for (std::size_t p = 0; p < s.labels.size(); ++p) {
    if (s.labels[p] >= s.count) {
      throw Error("segment map: pixel " + std::to_string(p) + " has id " +
                  std::to_string(s.labels[p]) + " outside [0, " +
                  std::to_string(s.count) + ")");
    }
  }
  for (std::size_t id = 0; id < s.count; ++id) {
    if (counts[id] == 0) throw Error("segment map: id " + std::to_string(id) + " is empty");
  }
  std::vector<std::uint32_t> component;
  if (connected_components(s.height, s.width, s.labels, component) != s.count) {
    throw Error("segment map: some segment is not 4-connected");
  }
}

SegmentMap segment_grid(std::size_t height, std::size_t width, std::size_t rows,
                        std::size_t cols) {
  if (rows == 0 || cols == 0) throw Error("segment: grid must be at least 1x1");
  if (rows > height || cols > width) {
    throw Error("segment: grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                " larger than image " + std::to_string(height) + "x" +
                std::to_string(width));
  }
  SegmentMap s;
  s.height = height;
  s.width = width;
  s.count = rows * cols;
  s.method = SegmentationMethod::kGrid;
  s.labels.resize(height * width);
  const std::size_t cell_h = height / rows, cell_w = width / cols;
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t r = std::min(y / cell_h, rows - 1);
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t c = std::min(x / cell_w, cols - 1);
      s.labels[y * width + x] = static_cast<std::uint32_t>(r * cols + c);
    }
  }
  return s;
}

template <typename T>
SegmentMap segment_slic(const Tensor<T>& image, std::size_t target_segments,
                        double compactness, std::size_t iterations) {
  if (image.rank() != 3) throw Error("segment: expected a C x H x W image");
  const std::size_t channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (target_segments == 0 || target_segments > h * w) {
    throw Error("segment: cannot form " + std::to_string(target_segments) +
                " segments on a " + std::to_string(h) + "x" + std::to_string(w) +
                " image");
  }
  const double step = std::sqrt(static_cast<double>(h * w) / static_cast<double>(target_segments));
  const std::size_t grid_y = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(h / step)));
  const std::size_t grid_x = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(w / step)));

  struct Center {
    double y, x;
    std::vector<double> color;
  };
  std::vector<Center> centers;
  for (std::size_t gy = 0; gy < grid_y; ++gy) {
    for (std::size_t gx = 0; gx < grid_x; ++gx) {
      const double cy = (static_cast<double>(gy) + 0.5) * static_cast<double>(h) / static_cast<double>(grid_y);
      const double cx = (static_cast<double>(gx) + 0.5) * static_cast<double>(w) / static_cast<double>(grid_x);
      Center c{cy, cx, std::vector<double>(channels)};
      const auto py = std::min(h - 1, static_cast<std::size_t>(cy));
      const auto px = std::min(w - 1, static_cast<std::size_t>(cx));
      for (std::size_t ch = 0; ch < channels; ++ch) c.color[ch] = image.at(ch, py, px);
      centers.push_back(std::move(c));
    }
  }

  std::vector<std::uint32_t> assign(h * w, 0);
  std::vector<double> best(h * w);
  const double spatial = compactness / step;
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(step));
  for (std::size_t it = 0; it < iterations; ++it) {
    std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const auto& c = centers[k];
      const auto y0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(c.y) - radius);
      const auto y1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(h) - 1,
                                               static_cast<std::ptrdiff_t>(c.y) + radius);
      const auto x0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(c.x) - radius);
      const auto x1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w) - 1,
                                               static_cast<std::ptrdiff_t>(c.x) + radius);
      for (auto y = y0; y <= y1; ++y) {
        for (auto x = x0; x <= x1; ++x) {
          const auto uy = static_cast<std::size_t>(y), ux = static_cast<std::size_t>(x);
          double dc = 0;
          for (std::size_t ch = 0; ch < channels; ++ch) {
            const double d = static_cast<double>(image.at(ch, uy, ux)) - c.color[ch];
            dc += d * d;
          }
          const double dy = static_cast<double>(y) - c.y, dx = static_cast<double>(x) - c.x;
          const double dist = dc + spatial * spatial * (dy * dy + dx * dx);
          const std::size_t p = uy * w + ux;
          if (dist < best[p]) {
            best[p] = dist;
            assign[p] = static_cast<std::uint32_t>(k);
          }
        }
      }
    }
    // Pixels no window reached keep their previous assignment.
    std::vector<Center> sums(centers.size(), Center{0, 0, std::vector<double>(channels, 0)});
    std::vector<std::size_t> counts(centers.size(), 0);
    for (std::size_t p = 0; p < h * w; ++p) {
      auto& s = sums[assign[p]];
      s.y += static_cast<double>(p / w);
      s.x += static_cast<double>(p % w);
      for (std::size_t ch = 0; ch < channels; ++ch) {
        s.color[ch] += image.at(ch, p / w, p % w);
      }
      ++counts[assign[p]];
    }
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (counts[k] == 0) continue;
      const double n = static_cast<double>(counts[k]);
      centers[k].y = sums[k].y / n;
      centers[k].x = sums[k].x / n;
      for (std::size_t ch = 0; ch < channels; ++ch) centers[k].color[ch] = sums[k].color[ch] / n;
    }
  }

  // Connectivity repair: split every cluster into 4-connected components,
  // then fold components smaller than a quarter of the nominal segment size
  // into the neighbor met first in raster order.
  std::vector<std::uint32_t> component;
  const std::size_t n_comp = connected_components(h, w, assign, component);
  std::vector<std::size_t> comp_size(n_comp, 0);
  for (auto c : component) ++comp_size[c];
  const std::size_t min_size = std::max<std::size_t>(1, (h * w) / (4 * target_segments));

  constexpr auto kUnset = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> final_id(n_comp, kUnset);
  std::uint32_t next = 0;
  for (std::size_t p = 0; p < h * w; ++p) {
    const auto c = component[p];
    if (final_id[c] != kUnset) continue;
    std::uint32_t neighbor = kUnset;
    if (p % w > 0) neighbor = final_id[component[p - 1]];
    if (neighbor == kUnset && p >= w) neighbor = final_id[component[p - w]];
    if (comp_size[c] < min_size && neighbor != kUnset) {
      final_id[c] = neighbor;
    } else {
      final_id[c] = next++;
    }
  }

  SegmentMap s;
  s.height = h;
  s.width = w;
  s.count = next;
  s.method = SegmentationMethod::kSlic;
  s.labels.resize(h * w);
  for (std::size_t p = 0; p < h * w; ++p) s.labels[p] = final_id[component[p]];
  return s;
}

template <typename T>
SegmentMap segment(const Tensor<T>& image, const SegmentOptions& options) {
  if (image.rank() != 3) throw Error("segment: expected a C x H x W image");
  if (options.method == SegmentationMethod::kGrid) {
    return segment_grid(image.dim(1), image.dim(2), options.grid_k, options.grid_k);
  }
  if (options.grid_k == 0) throw Error("segment: grid_k must be >= 1");
  return segment_slic(image, options.grid_k * options.grid_k, options.compactness,
                      options.slic_iterations);
}

namespace {

template <typename T>
std::vector<T> channel_means(const Tensor<T>& image) {
  return reduce_mean_spatial(image).values();
}

template <typename T>
Tensor<T> perturb_with_fill(const Tensor<T>& image, const SegmentMap& segments,
                            const Mask& mask, const std::vector<T>& fill) {
  Tensor<T> out = image;
  const std::size_t plane = segments.height * segments.width;
  for (std::size_t p = 0; p < plane; ++p) {
    if (mask[segments.labels[p]]) continue;
    for (std::size_t c = 0; c < image.dim(0); ++c) out[c * plane + p] = fill[c];
  }
  return out;
}

void check_mask(const SegmentMap& segments, const Mask& mask) {
  if (mask.size() != segments.count) {
    throw Error("perturb: mask has " + std::to_string(mask.size()) + " entries for " +
                std::to_string(segments.count) + " segments");
  }
}

template <typename T>
void check_image(const Tensor<T>& image, const SegmentMap& segments) {
  if (image.rank() != 3 || image.dim(1) != segments.height ||
      image.dim(2) != segments.width) {
    throw Error("perturb: image " + shape_string(image.shape()) +
                " does not match segment map " + std::to_string(segments.height) +
                "x" + std::to_string(segments.width));
  }
}

}  // namespace

template <typename T>
Tensor<T> perturb(const Tensor<T>& image, const SegmentMap& segments,
                  const Mask& mask) {
  check_mask(segments, mask);
  check_image(image, segments);
  return perturb_with_fill(image, segments, mask, channel_means(image));
}

double cosine_distance(const Mask& mask) {
  const std::size_t on = static_cast<std::size_t>(std::count_if(
      mask.begin(), mask.end(), [](std::uint8_t v) { return v != 0; }));
  if (on == 0 || mask.empty()) return 1.0;
  // z . 1 / (|z| |1|) with z binary: on / (sqrt(on) sqrt(K)).
  return 1.0 - std::sqrt(static_cast<double>(on) / static_cast<double>(mask.size()));
}

double kernel_weight(const Mask& mask, double sigma) {
  if (!(sigma > 0)) throw Error("kernel width sigma must be > 0");
  const double d = cosine_distance(mask);
  return std::exp(-(d * d) / (sigma * sigma));
}

template <typename T>
double pixel_kernel_weight(const Tensor<T>& image, const Tensor<T>& perturbed,
                           double sigma) {
  if (!(sigma > 0)) throw Error("kernel width sigma must be > 0");
  if (image.shape() != perturbed.shape()) {
    throw Error("pixel kernel: shape mismatch " + shape_string(image.shape()) +
                " vs " + shape_string(perturbed.shape()));
  }
  double sq = 0;
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double d = static_cast<double>(image[i]) - static_cast<double>(perturbed[i]);
    sq += d * d;
  }
  const double rms2 = sq / static_cast<double>(std::max<std::size_t>(1, image.size()));
  return std::exp(-rms2 / (sigma * sigma));
}

std::vector<Mask> sample_masks(std::size_t segments, std::size_t samples,
                               std::uint64_t seed) {
  if (samples == 0) throw Error("lime: num_samples must be >= 1");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<Mask> masks;
  masks.reserve(samples);
  masks.emplace_back(segments, std::uint8_t{1});
  for (std::size_t n = 1; n < samples; ++n) {
    Mask m(segments);
    for (auto& v : m) v = coin(rng) ? 1 : 0;
    masks.push_back(std::move(m));
  }
  return masks;
}

SurrogateFit fit_surrogate(const PerturbationBatch& batch, double lambda) {
  const std::size_t n = batch.masks.size();
  if (n == 0) throw Error("fit_surrogate: empty batch");
  if (batch.outputs.size() != n || batch.weights.size() != n) {
    throw Error("fit_surrogate: masks, outputs and weights differ in length");
  }
  if (!(lambda >= 0)) throw Error("fit_surrogate: lambda must be >= 0");
  const std::size_t k = batch.masks[0].size();
  double wsum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (batch.masks[i].size() != k) throw Error("fit_surrogate: ragged masks");
    if (!(batch.weights[i] >= 0)) throw Error("fit_surrogate: negative weight");
    wsum += batch.weights[i];
  }
  if (!(wsum > 0)) throw Error("fit_surrogate: all sample weights are zero");

  // Center on weighted means so the intercept drops out of the penalized
  // system: (Zc' W Zc + lambda I) beta = Zc' W (y - ybar).
  std::vector<double> zbar(k, 0.0);
  double ybar = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = batch.weights[i];
    ybar += wi * batch.outputs[i];
    for (std::size_t j = 0; j < k; ++j) zbar[j] += wi * batch.masks[i][j];
  }
  ybar /= wsum;
  for (double& v : zbar) v /= wsum;

  std::vector<double> a(k * k, 0.0), rhs(k, 0.0), zc(k);
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = batch.weights[i];
    const double yc = batch.outputs[i] - ybar;
    for (std::size_t j = 0; j < k; ++j) zc[j] = batch.masks[i][j] - zbar[j];
    for (std::size_t r = 0; r < k; ++r) {
      rhs[r] += wi * zc[r] * yc;
      for (std::size_t c = 0; c <= r; ++c) a[r * k + c] += wi * zc[r] * zc[c];
    }
  }
  double max_diag = 0;
  for (std::size_t r = 0; r < k; ++r) {
    a[r * k + r] += lambda;
    max_diag = std::max(max_diag, a[r * k + r]);
  }

  // Cholesky on the lower triangle.
  const double tiny = 1e-12 * std::max(max_diag, 1e-300);
  for (std::size_t j = 0; j < k; ++j) {
    double d = a[j * k + j];
    for (std::size_t p = 0; p < j; ++p) d -= a[j * k + p] * a[j * k + p];
    if (!(d > tiny)) {
      throw Error("fit_surrogate: singular system (a segment never varies or "
                  "samples are too few); use lambda > 0");
    }
    const double l = std::sqrt(d);
    a[j * k + j] = l;
    for (std::size_t r = j + 1; r < k; ++r) {
      double v = a[r * k + j];
      for (std::size_t p = 0; p < j; ++p) v -= a[r * k + p] * a[j * k + p];
      a[r * k + j] = v / l;
    }
  }
  std::vector<double> beta(rhs);
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t p = 0; p < r; ++p) beta[r] -= a[r * k + p] * beta[p];
    beta[r] /= a[r * k + r];
  }
  for (std::size_t r = k; r-- > 0;) {
    for (std::size_t p = r + 1; p < k; ++p) beta[r] -= a[p * k + r] * beta[p];
    beta[r] /= a[r * k + r];
  }

  SurrogateFit fit;
  fit.intercept = ybar;
  for (std::size_t j = 0; j < k; ++j) fit.intercept -= beta[j] * zbar[j];
  fit.coefficients = std::move(beta);

  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double pred = fit.intercept;
    for (std::size_t j = 0; j < k; ++j) pred += fit.coefficients[j] * batch.masks[i][j];
    const double wi = batch.weights[i];
    ss_res += wi * (batch.outputs[i] - pred) * (batch.outputs[i] - pred);
    ss_tot += wi * (batch.outputs[i] - ybar) * (batch.outputs[i] - ybar);
  }
  fit.weighted_r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

template <typename T>
std::vector<LimeExplanation> explain(const Classifier<T>& classifier,
                                     const Tensor<T>& image,
                                     const LimeParams& params) {
  if (params.top_labels == 0) throw Error("lime: top_labels must be >= 1");
  if (!(params.sigma > 0)) throw Error("lime: sigma must be > 0");
  auto segments = std::make_shared<const SegmentMap>(segment(image, params.segmentation));
  const auto masks = sample_masks(segments->count, params.num_samples, params.seed);
  const auto fill = channel_means(image);
  const std::size_t n = masks.size();

  std::vector<std::vector<double>> predictions(n);
  std::vector<double> weights(n);
  auto evaluate = [&](std::size_t i) {
    const auto perturbed = perturb_with_fill(image, *segments, masks[i], fill);
    predictions[i] = classifier(perturbed);
    weights[i] = params.distance == KernelDistance::kCosine
                     ? kernel_weight(masks[i], params.sigma)
                     : pixel_kernel_weight(image, perturbed, params.sigma);
  };
  const std::size_t threads = std::clamp<std::size_t>(params.threads, 1, n);
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) evaluate(i);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < n; i += threads) evaluate(i);
      });
    }
  }

  const std::size_t classes = predictions[0].size();
  if (classes == 0) throw Error("lime: classifier returned no scores");
  for (const auto& p : predictions) {
    if (p.size() != classes) throw Error("lime: classifier output size varies");
  }
  std::vector<std::size_t> order(classes);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return predictions[0][a] > predictions[0][b];
  });
  order.resize(std::min(params.top_labels, classes));

  std::vector<LimeExplanation> out;
  PerturbationBatch batch{masks, std::vector<double>(n), weights, params.seed};
  for (std::size_t label : order) {
    for (std::size_t i = 0; i < n; ++i) batch.outputs[i] = predictions[i][label];
    auto fit = fit_surrogate(batch, params.lambda);
    LimeExplanation e;
    e.target_class = label;
    e.probability = predictions[0][label];
    e.coefficients = std::move(fit.coefficients);
    e.intercept = fit.intercept;
    e.weighted_r2 = fit.weighted_r2;
    e.segments = segments;
    e.params = params;
    out.push_back(std::move(e));
  }
  return out;
}

template <typename T>
std::vector<LimeExplanation> explain(const nn::ModelGraph<T>& model,
                                     const Tensor<T>& image,
                                     const LimeParams& params) {
  Classifier<T> classifier = [&model](const Tensor<T>& x) {
    const auto trace = nn::forward(model, x);
    return std::vector<double>(trace.probabilities.begin(), trace.probabilities.end());
  };
  return explain(classifier, image, params);
}

#define ATTRIB_INSTANTIATE(T)                                                    \
  template SegmentMap segment_slic(const Tensor<T>&, std::size_t, double,       \
                                   std::size_t);                                \
  template SegmentMap segment(const Tensor<T>&, const SegmentOptions&);         \
  template Tensor<T> perturb(const Tensor<T>&, const SegmentMap&, const Mask&); \
  template double pixel_kernel_weight(const Tensor<T>&, const Tensor<T>&, double); \
  template std::vector<LimeExplanation> explain(const Classifier<T>&,           \
                                                const Tensor<T>&,               \
                                                const LimeParams&);             \
  template std::vector<LimeExplanation> explain(const nn::ModelGraph<T>&,       \
                                                const Tensor<T>&,               \
                                                const LimeParams&);

ATTRIB_INSTANTIATE(float)
ATTRIB_INSTANTIATE(double)

#undef ATTRIB_INSTANTIATE

}  // namespace attrib::lime
