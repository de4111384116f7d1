#include "attrib/viz.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

namespace attrib::viz {

RgbImage::RgbImage(std::size_t w, std::size_t h, std::array<std::uint8_t, 3> fill)
    : width(w), height(h), pixels(w * h * 3) {
  for (std::size_t i = 0; i < w * h; ++i) {
    std::copy(fill.begin(), fill.end(), pixels.begin() + static_cast<std::ptrdiff_t>(i * 3));
  }
}

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

std::uint8_t blend(std::uint8_t a, std::uint8_t b, double t) {
  return to_byte((1.0 - t) * a + t * b);
}

}  // namespace

std::array<std::uint8_t, 3> colormap_color(double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw Error("colormap: value " + std::to_string(t) + " outside [0, 1]");
  }
  const auto& lo = t <= 0.5 ? kColdColor : kMidColor;
  const auto& hi = t <= 0.5 ? kMidColor : kHotColor;
  const double u = t <= 0.5 ? 2.0 * t : 2.0 * t - 1.0;
  std::array<std::uint8_t, 3> out{};
  for (std::size_t c = 0; c < 3; ++c) {
    out[c] = to_byte(lo[c] + (static_cast<double>(hi[c]) - lo[c]) * u);
  }
  return out;
}

template <typename T>
RgbImage colormap(const Tensor<T>& map) {
  if (map.rank() != 2) {
    throw Error("colormap: expected an H x W map, got " + shape_string(map.shape()));
  }
  RgbImage out(map.dim(1), map.dim(0));
  for (std::size_t i = 0; i < map.size(); ++i) {
    const auto c = colormap_color(static_cast<double>(map[i]));
    std::copy(c.begin(), c.end(), out.pixels.begin() + static_cast<std::ptrdiff_t>(i * 3));
  }
  return out;
}

RgbImage overlay(const RgbImage& base, const RgbImage& heat, double alpha) {
  if (base.width != heat.width || base.height != heat.height) {
    throw Error("overlay: dimension mismatch " + std::to_string(base.width) + "x" +
                std::to_string(base.height) + " vs " + std::to_string(heat.width) +
                "x" + std::to_string(heat.height));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("overlay: alpha must be in [0, 1]");
  RgbImage out = base;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = blend(base.pixels[i], heat.pixels[i], alpha);
  }
  return out;
}

RgbImage render_lime(const RgbImage& image, const lime::LimeExplanation& explanation,
                     LimeRenderMode mode, std::size_t top_k) {
  if (!explanation.segments) throw Error("render_lime: explanation has no segment map");
  const auto& seg = *explanation.segments;
  if (seg.width != image.width || seg.height != image.height) {
    throw Error("render_lime: segment map " + std::to_string(seg.height) + "x" +
                std::to_string(seg.width) + " does not match image " +
                std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  const auto& coef = explanation.coefficients;
  if (coef.size() != seg.count) throw Error("render_lime: coefficient count mismatch");

  if (mode == LimeRenderMode::kIsolate) {
    std::vector<std::size_t> order(coef.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return coef[a] > coef[b]; });
    std::vector<bool> keep(coef.size(), false);
    for (std::size_t i = 0; i < std::min(top_k, order.size()); ++i) {
      if (coef[order[i]] > 0) keep[order[i]] = true;
    }
    RgbImage out(image.width, image.height, kNeutralBackground);
    for (std::size_t p = 0; p < seg.labels.size(); ++p) {
      if (!keep[seg.labels[p]]) continue;
      std::copy_n(image.pixels.begin() + static_cast<std::ptrdiff_t>(p * 3), 3,
                  out.pixels.begin() + static_cast<std::ptrdiff_t>(p * 3));
    }
    return out;
  }

  double peak = 0;
  for (double b : coef) peak = std::max(peak, std::abs(b));
  RgbImage out = image;
  if (peak == 0) return out;
  for (std::size_t p = 0; p < seg.labels.size(); ++p) {
    const double b = coef[seg.labels[p]];
    if (b == 0) continue;
    const double strength = kMaxTint * std::abs(b) / peak;
    const auto& tint = b > 0 ? kPositiveTint : kNegativeTint;
    for (std::size_t c = 0; c < 3; ++c) {
      out.pixels[p * 3 + c] = blend(image.pixels[p * 3 + c], tint[c], strength);
    }
  }
  return out;
}

template <typename T>
Tensor<T> attribution_magnitude(const Tensor<T>& attributions) {
  if (attributions.rank() != 3) {
    throw Error("attribution mask: expected C x H x W, got " +
                shape_string(attributions.shape()));
  }
  const std::size_t h = attributions.dim(1), w = attributions.dim(2);
  Tensor<T> mag(Shape{h, w});
  for (std::size_t c = 0; c < attributions.dim(0); ++c) {
    for (std::size_t i = 0; i < h * w; ++i) mag[i] += std::abs(attributions[c * h * w + i]);
  }
  return minmax_normalize(mag);
}

template <typename T>
RgbImage render_signed_attribution(const Tensor<T>& attributions) {
  if (attributions.rank() != 3) {
    throw Error("attribution render: expected C x H x W, got " +
                shape_string(attributions.shape()));
  }
  const std::size_t h = attributions.dim(1), w = attributions.dim(2);
  std::vector<double> sum(h * w, 0.0);
  for (std::size_t c = 0; c < attributions.dim(0); ++c) {
    for (std::size_t i = 0; i < h * w; ++i) sum[i] += static_cast<double>(attributions[c * h * w + i]);
  }
  double peak = 0;
  for (double v : sum) peak = std::max(peak, std::abs(v));
  RgbImage out(w, h);
  if (peak == 0) return out;
  for (std::size_t i = 0; i < h * w; ++i) {
    const double s = std::abs(sum[i]) / peak;
    const auto& tint = sum[i] >= 0 ? kPositiveTint : kNegativeTint;
    for (std::size_t c = 0; c < 3; ++c) out.pixels[i * 3 + c] = to_byte(s * tint[c]);
  }
  return out;
}

template <typename T>
RgbImage to_rgb(const Tensor<T>& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw Error("to_rgb: expected 3 x H x W, got " + shape_string(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  RgbImage out(w, h);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double v = std::clamp(static_cast<double>(image.at(c, y, x)), 0.0, 1.0);
        out.pixel(y, x)[c] = to_byte(v * 255.0);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> to_tensor(const RgbImage& image) {
  Tensor<T> out(Shape{3, image.height, image.width});
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        out.at(c, y, x) = static_cast<T>(image.pixel(y, x)[c]) / static_cast<T>(255);
      }
    }
  }
  return out;
}

namespace {

std::string extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext;
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> std::size_t {
    skip_space();
    std::size_t v = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
      if (++digits > 9) throw Error("corrupt PPM '" + path.string() + "': header value too large");
    }
    if (digits == 0) throw Error("corrupt PPM '" + path.string() + "': bad header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw Error("corrupt PPM '" + path.string() + "': not a binary P6 file");
  }
  pos = 2;
  const std::size_t w = number(), h = number(), maxval = number();
  if (maxval != 255) throw Error("unsupported PPM '" + path.string() + "': maxval must be 255");
  if (w == 0 || h == 0) throw Error("corrupt PPM '" + path.string() + "': empty image");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw Error("corrupt PPM '" + path.string() + "': bad header");
  }
  ++pos;
  if (bytes.size() - pos != w * h * 3) {
    throw Error("corrupt PPM '" + path.string() + "': expected " + std::to_string(w * h * 3) +
                " pixel bytes, found " + std::to_string(bytes.size() - pos));
  }
  RgbImage out(w, h);
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), out.pixels.begin());
  return out;
}

void write_png(const RgbImage& image, const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw Error("failed writing PNG '" + path.string() + "': " + msg);
  }
}

RgbImage read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("cannot open image '" + path.string() + "'");
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw Error("corrupt PNG '" + path.string() + "': " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  RgbImage out(png.width, png.height);
  if (!png_image_finish_read(&png, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw Error("corrupt PNG '" + path.string() + "': " + msg);
  }
  return out;
}

}  // namespace

void write_image(const RgbImage& image, const std::filesystem::path& path) {
  if (image.width == 0 || image.height == 0 ||
      image.pixels.size() != image.width * image.height * 3) {
    throw Error("write_image: malformed image buffer");
  }
  const auto ext = extension(path);
  if (ext == ".ppm") return write_ppm(image, path);
  if (ext == ".png") return write_png(image, path);
  throw Error("unsupported image format '" + ext + "' (use .ppm or .png)");
}

RgbImage read_image(const std::filesystem::path& path) {
  const auto ext = extension(path);
  if (ext == ".ppm") return read_ppm(path);
  if (ext == ".png") return read_png(path);
  throw Error("unsupported image format '" + ext + "' (use .ppm or .png)");
}

#define ATTRIB_INSTANTIATE(T)                                            \
  template RgbImage colormap(const Tensor<T>&);                          \
  template Tensor<T> attribution_magnitude(const Tensor<T>&);            \
  template RgbImage render_signed_attribution(const Tensor<T>&);         \
  template RgbImage to_rgb(const Tensor<T>&);                            \
  template Tensor<T> to_tensor(const RgbImage&);

ATTRIB_INSTANTIATE(float)
ATTRIB_INSTANTIATE(double)

#undef ATTRIB_INSTANTIATE

}  // namespace attrib::viz
