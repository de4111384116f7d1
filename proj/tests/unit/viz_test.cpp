#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "attrib/viz.hpp"
#include "test_util.hpp"

namespace attrib::viz {
namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("attrib_viz_test_" + name);
}

RgbImage random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RgbImage img(w, h);
  for (auto& v : img.pixels) v = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

using Color = std::array<std::uint8_t, 3>;

TEST(Colormap, ControlPoints) {
  EXPECT_EQ(colormap_color(0.0), kColdColor);
  EXPECT_EQ(colormap_color(0.5), kMidColor);
  EXPECT_EQ(colormap_color(1.0), kHotColor);
}

TEST(Colormap, QuarterIsHalfwayBetweenColdAndMid) {
  // blue 255 -> 0 and green 0 -> 255 at u = 0.5: 127.5 rounds to 128.
  EXPECT_EQ(colormap_color(0.25), (Color{0, 128, 128}));
  // 0.75: green 255 -> 0, red 0 -> 255 at u = 0.5.
  EXPECT_EQ(colormap_color(0.75), (Color{128, 128, 0}));
  // 0.1: u = 0.2, green 51, blue 204.
  EXPECT_EQ(colormap_color(0.1), (Color{0, 51, 204}));
}

TEST(Colormap, OutOfRangeRejected) {
  EXPECT_THROW(colormap_color(-0.01), Error);
  EXPECT_THROW(colormap_color(1.01), Error);
  EXPECT_THROW(colormap_color(std::nan("")), Error);
  EXPECT_THROW(colormap(Tensor<float>(Shape{2, 2}, 2.0f)), Error);
  EXPECT_THROW(colormap(Tensor<float>(Shape{1, 2, 2})), Error);
}

TEST(Colormap, RedChannelMonotone) {
  int last = -1;
  for (int i = 0; i <= 1000; ++i) {
    const int red = colormap_color(i / 1000.0)[0];
    EXPECT_GE(red, last);
    last = red;
  }
}

TEST(Colormap, MapsEveryPixel) {
  const Tensor<double> map(Shape{1, 3}, {0.0, 0.5, 1.0});
  const auto img = colormap(map);
  EXPECT_EQ(img.width, 3u);
  EXPECT_EQ(img.height, 1u);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{0, 0, 255, 0, 255, 0, 255, 0, 0}));
}

TEST(Overlay, EndpointsAreBitExact) {
  const auto base = random_image(9, 7, 1);
  const auto heat = random_image(9, 7, 2);
  EXPECT_EQ(overlay(base, heat, 0.0), base);
  EXPECT_EQ(overlay(base, heat, 1.0), heat);
}

TEST(Overlay, DefaultStrengthBlend) {
  RgbImage base(1, 1, {100, 10, 0});
  RgbImage heat(1, 1, {200, 255, 1});
  // 0.6 * 100 + 0.4 * 200 = 140; 6 + 102 = 108; 0.4 rounds to 0.
  EXPECT_EQ(overlay(base, heat, 0.4).pixels, (std::vector<std::uint8_t>{140, 108, 0}));
}

TEST(Overlay, Errors) {
  EXPECT_THROW(overlay(RgbImage(2, 2), RgbImage(2, 3), 0.5), Error);
  EXPECT_THROW(overlay(RgbImage(2, 2), RgbImage(2, 2), 1.5), Error);
}

lime::LimeExplanation explanation(std::vector<double> coefficients) {
  lime::LimeExplanation e;
  e.segments = std::make_shared<const lime::SegmentMap>(lime::segment_grid(4, 4, 2, 2));
  e.coefficients = std::move(coefficients);
  return e;
}

TEST(RenderLime, ZeroCoefficientsLeaveImageUnchanged) {
  const auto img = random_image(4, 4, 3);
  EXPECT_EQ(render_lime(img, explanation({0, 0, 0, 0}), LimeRenderMode::kSigned), img);
}

TEST(RenderLime, SinglePositiveSegmentOnlyTintedGreen) {
  RgbImage img(4, 4, {50, 50, 50});
  const auto out = render_lime(img, explanation({0, 0.3, 0, 0}), LimeRenderMode::kSigned);
  const auto seg = *explanation({}).segments;
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) {
      const auto* p = out.pixel(y, x);
      if (seg.at(y, x) == 1) {
        // 0.4 * 50 + 0.6 * 255 = 173; other channels 0.4 * 50 = 20.
        EXPECT_EQ(p[0], 20);
        EXPECT_EQ(p[1], 173);
        EXPECT_EQ(p[2], 20);
      } else {
        EXPECT_EQ(p[0], 50);
        EXPECT_EQ(p[1], 50);
        EXPECT_EQ(p[2], 50);
      }
    }
  }
}

TEST(RenderLime, NegativeSegmentTintedRedInProportion) {
  RgbImage img(4, 4, {0, 0, 0});
  const auto out = render_lime(img, explanation({1.0, 0, 0, -0.5}), LimeRenderMode::kSigned);
  EXPECT_EQ(out.pixel(0, 0)[1], 153);  // 0.6 * 255
  EXPECT_EQ(out.pixel(3, 3)[0], 77);   // 0.3 * 255 = 76.5
  EXPECT_EQ(out.pixel(3, 3)[1], 0);
}

TEST(RenderLime, IsolateTopOneShowsOnlyThatSegment) {
  const auto img = random_image(4, 4, 4);
  const auto out = render_lime(img, explanation({0.1, -0.2, 0.4, 0.3}), LimeRenderMode::kIsolate, 1);
  const auto seg = *explanation({}).segments;
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const auto expected = seg.at(y, x) == 2 ? img.pixel(y, x)[c] : kNeutralBackground[c];
        EXPECT_EQ(out.pixel(y, x)[c], expected);
      }
    }
  }
}

TEST(RenderLime, IsolateSkipsNonPositive) {
  const auto img = random_image(4, 4, 5);
  const auto out = render_lime(img, explanation({-0.1, -0.2, 0, -1}), LimeRenderMode::kIsolate, 5);
  EXPECT_EQ(out, RgbImage(4, 4, kNeutralBackground));
}

TEST(RenderLime, DimensionMismatch) {
  EXPECT_THROW(render_lime(RgbImage(5, 4), explanation({0, 0, 0, 0}), LimeRenderMode::kSigned), Error);
}

TEST(Attribution, MagnitudeSumsAbsoluteChannels) {
  const Tensor<double> a(Shape{2, 1, 3}, {1, -2, 0, -1, 0, 0});
  // |.| summed: 2, 2, 0 -> normalized 1, 1, 0
  EXPECT_EQ(attribution_magnitude(a).values(), (std::vector<double>{1, 1, 0}));
}

TEST(Attribution, SignedRendering) {
  const Tensor<double> a(Shape{1, 1, 3}, {2, -1, 0});
  const auto img = render_signed_attribution(a);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{0, 255, 0, 128, 0, 0, 0, 0, 0}));
}

TEST(Conversion, TensorRoundTrip) {
  const auto img = random_image(5, 6, 6);
  EXPECT_EQ(to_rgb(to_tensor<float>(img)), img);
  EXPECT_EQ(to_rgb(to_tensor<double>(img)), img);
  EXPECT_EQ(to_rgb(Tensor<double>(Shape{3, 1, 1}, {-1.0, 2.0, 0.5})).pixels,
            (std::vector<std::uint8_t>{0, 255, 128}));
}

TEST(ImageFile, PpmRoundTripIsBitExact) {
  const auto img = random_image(16, 16, 7);
  const auto path = temp_path("rt.ppm");
  write_image(img, path);
  EXPECT_EQ(read_image(path), img);
  std::filesystem::remove(path);
}

TEST(ImageFile, PngRoundTripIsBitExact) {
  const auto img = random_image(13, 9, 8);
  const auto path = temp_path("rt.png");
  write_image(img, path);
  EXPECT_EQ(read_image(path), img);
  std::filesystem::remove(path);
}

TEST(ImageFile, PpmHeaderCommentsAccepted) {
  const auto path = temp_path("comment.ppm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n# made by hand\n2 1\n255\n";
    out.write("\x01\x02\x03\x04\x05\x06", 6);
  }
  EXPECT_EQ(read_image(path).pixels, (std::vector<std::uint8_t>{1, 2, 3, 4, 5, 6}));
  std::filesystem::remove(path);
}

TEST(ImageFile, Errors) {
  EXPECT_THROW(read_image(temp_path("missing.ppm")), Error);
  EXPECT_THROW(read_image(temp_path("missing.png")), Error);
  EXPECT_THROW(write_image(RgbImage(2, 2), temp_path("x.jpg")), Error);
  const auto path = temp_path("short.ppm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n4 4\n255\n" << "abc";
  }
  EXPECT_THROW(read_image(path), Error);
  {
    std::ofstream out(path, std::ios::binary);
    out << "P3\n1 1\n255\n1 2 3\n";
  }
  EXPECT_THROW(read_image(path), Error);
  std::filesystem::remove(path);
  const auto png = temp_path("bad.png");
  {
    std::ofstream out(png, std::ios::binary);
    out << "not a png";
  }
  EXPECT_THROW(read_image(png), Error);
  std::filesystem::remove(png);
}

TEST(ImageFile, LargeImageResizedForModel) {
  const auto img = random_image(768, 768, 9);
  const auto path = temp_path("large.ppm");
  write_image(img, path);
  const auto resized = bilinear_resize(to_tensor<float>(read_image(path)), 224, 224);
  EXPECT_EQ(resized.shape(), (Shape{3, 224, 224}));
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace attrib::viz
