#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "attrib/lime.hpp"
#include "attrib/tensor.hpp"

namespace attrib::viz {

// 8-bit interleaved RGB, row-major.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h, std::array<std::uint8_t, 3> fill = {0, 0, 0});

  std::uint8_t* pixel(std::size_t y, std::size_t x) { return &pixels[(y * width + x) * 3]; }
  const std::uint8_t* pixel(std::size_t y, std::size_t x) const {
    return &pixels[(y * width + x) * 3];
  }
  bool operator==(const RgbImage&) const = default;
};

// Colormap control colors at 0, 0.5 and 1.
inline constexpr std::array<std::uint8_t, 3> kColdColor = {0, 0, 255};
inline constexpr std::array<std::uint8_t, 3> kMidColor = {0, 255, 0};
inline constexpr std::array<std::uint8_t, 3> kHotColor = {255, 0, 0};

// Piecewise-linear blue -> green -> red. For t in [0, 0.5] each channel is
// round(cold + (mid - cold) * 2t); for t in (0.5, 1] round(mid + (hot - mid)
// * (2t - 1)), rounding half away from zero. Throws on values outside
// [0, 1]. Accepts an H x W map.
template <typename T>
RgbImage colormap(const Tensor<T>& map);

std::array<std::uint8_t, 3> colormap_color(double t);

// round((1 - alpha) * base + alpha * heat) per channel.
RgbImage overlay(const RgbImage& base, const RgbImage& heat, double alpha);

enum class LimeRenderMode {
  kIsolate,  // top positive segments on a neutral background
  kSigned,   // green tint on positive segments, red on negative
};

inline constexpr std::array<std::uint8_t, 3> kNeutralBackground = {128, 128, 128};
inline constexpr std::array<std::uint8_t, 3> kPositiveTint = {0, 255, 0};
inline constexpr std::array<std::uint8_t, 3> kNegativeTint = {255, 0, 0};
inline constexpr double kMaxTint = 0.6;

// Signed mode: a segment with coefficient b is blended toward its tint with
// strength kMaxTint * |b| / max|b|. Isolate mode keeps the `top_k` segments
// with the largest positive coefficients.
RgbImage render_lime(const RgbImage& image, const lime::LimeExplanation& explanation,
                     LimeRenderMode mode, std::size_t top_k = 5);

// Sum of |attribution| over channels, min-max normalized: C x H x W -> H x W.
template <typename T>
Tensor<T> attribution_magnitude(const Tensor<T>& attributions);

// Signed rendering: positive attribution tints green, negative red, each
// scaled by max |sum over channels|.
template <typename T>
RgbImage render_signed_attribution(const Tensor<T>& attributions);

// [0, 1] C x H x W tensor <-> 8-bit image. Values are clamped then
// round(v * 255); the reverse is v / 255.
template <typename T>
RgbImage to_rgb(const Tensor<T>& image);
template <typename T>
Tensor<T> to_tensor(const RgbImage& image);

// Format chosen by extension: .ppm (binary P6) or .png.
void write_image(const RgbImage& image, const std::filesystem::path& path);
RgbImage read_image(const std::filesystem::path& path);

}  // namespace attrib::viz
