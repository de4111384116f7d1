#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string_view>
#include <vector>

#include "attrib/nn.hpp"

namespace attrib::lime {

enum class SegmentationMethod { kGrid, kSlic };

SegmentationMethod segmentation_from_string(std::string_view name);
std::string_view to_string(SegmentationMethod method);

// Per-pixel segment ids. Every id in [0, count) owns at least one pixel and
// its pixels form one 4-connected region.
struct SegmentMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t count = 0;
  std::vector<std::uint32_t> labels;  // row-major, height * width
  SegmentationMethod method = SegmentationMethod::kGrid;

  std::uint32_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
  std::vector<std::size_t> pixel_counts() const;
};

// Throws describing the first violated SegmentMap invariant.
void validate_segments(const SegmentMap& segments);

struct SegmentOptions {
  SegmentationMethod method = SegmentationMethod::kGrid;
  std::size_t grid_k = 8;  // cells per axis; slic targets grid_k^2 segments
  double compactness = 1.0;
  std::size_t slic_iterations = 10;
};

// Regular grid: floor-sized cells, the last row / column absorbs the
// remainder.
SegmentMap segment_grid(std::size_t height, std::size_t width, std::size_t rows,
                        std::size_t cols);

// SLIC-style k-means over (color, position) followed by connectivity repair.
template <typename T>
SegmentMap segment_slic(const Tensor<T>& image, std::size_t target_segments,
                        double compactness, std::size_t iterations);

template <typename T>
SegmentMap segment(const Tensor<T>& image, const SegmentOptions& options = {});

// One byte per segment: 1 keeps the segment, 0 replaces it.
using Mask = std::vector<std::uint8_t>;

// Absent segments are filled with the image's per-channel mean color.
template <typename T>
Tensor<T> perturb(const Tensor<T>& image, const SegmentMap& segments,
                  const Mask& mask);

// Cosine distance between the mask and the all-ones vector; an all-zero
// mask is defined to be at distance 1.
double cosine_distance(const Mask& mask);

// exp(-d^2 / sigma^2) with d the cosine distance above.
double kernel_weight(const Mask& mask, double sigma);

// exp(-d^2 / sigma^2) with d the RMS pixel difference between the image and
// its perturbation.
template <typename T>
double pixel_kernel_weight(const Tensor<T>& image, const Tensor<T>& perturbed,
                           double sigma);

// First mask is all ones; the rest are independent Bernoulli(1/2) draws.
std::vector<Mask> sample_masks(std::size_t segments, std::size_t samples,
                               std::uint64_t seed);

struct PerturbationBatch {
  std::vector<Mask> masks;
  std::vector<double> outputs;  // black-box score for the explained class
  std::vector<double> weights;  // kernel weights in (0, 1]
  std::uint64_t seed = 0;
};

struct SurrogateFit {
  std::vector<double> coefficients;
  double intercept = 0;
  double weighted_r2 = 0;
};

// Minimizes sum_n w_n (y_n - beta . z_n - beta0)^2 + lambda |beta|^2 in closed
// form; the intercept is not penalized.
SurrogateFit fit_surrogate(const PerturbationBatch& batch, double lambda);

enum class KernelDistance { kCosine, kPixel };

struct LimeParams {
  std::size_t num_samples = 1000;
  std::size_t top_labels = 3;
  std::uint64_t seed = 0;
  double sigma = 0.25;
  double lambda = 1.0;
  SegmentOptions segmentation;
  KernelDistance distance = KernelDistance::kCosine;
  std::size_t threads = 1;
};

struct LimeExplanation {
  std::size_t target_class = 0;
  double probability = 0;  // black-box score of the unperturbed image
  std::vector<double> coefficients;
  double intercept = 0;
  double weighted_r2 = 0;
  std::shared_ptr<const SegmentMap> segments;
  LimeParams params;
};

// Any image -> class-probability function. Must be safe to call
// concurrently when params.threads > 1.
template <typename T>
using Classifier = std::function<std::vector<double>(const Tensor<T>&)>;

// One explanation per top label, ordered by descending probability of the
// unperturbed image.
template <typename T>
std::vector<LimeExplanation> explain(const Classifier<T>& classifier,
                                     const Tensor<T>& image,
                                     const LimeParams& params = {});

template <typename T>
std::vector<LimeExplanation> explain(const nn::ModelGraph<T>& model,
                                     const Tensor<T>& image,
                                     const LimeParams& params = {});

}  // namespace attrib::lime
