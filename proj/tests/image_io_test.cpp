#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "diamond/image_io.hpp"
#include "test_util.hpp"

using namespace diamond;
using diamond::testing::random_image;
using diamond::testing::scratch_dir;

namespace {

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), std::streamsize(bytes.size()));
}

}  // namespace

TEST(ImageIo, HalfGrayQuantizesByRounding) {
  const auto dir = scratch_dir("io_half");
  save_image(dir / "half.png", Image(4, 4, 0.5f), ImageFormat::png8);
  const Image back = load_image(dir / "half.png");
  ASSERT_EQ(back.rows(), 4u);
  // round(0.5 * 255) = round(127.5) = 128
  for (float v : back.pixels()) EXPECT_EQ(v, float(128.0 / 255.0));
}

TEST(ImageIo, RawRoundTripIsBitExact) {
  const auto dir = scratch_dir("io_raw");
  Image img = random_image(16, 16, 21, -3.0f, 3.0f);
  img(3, 4) = -0.0f;
  img(5, 6) = 1e-40f;  // denormal
  save_image(dir / "a.f32", img, ImageFormat::rawf32);
  const Image back = load_image(dir / "a.f32");
  ASSERT_TRUE(back.same_shape(img));
  EXPECT_EQ(std::memcmp(back.pixels().data(), img.pixels().data(), img.size() * sizeof(float)), 0);
}

TEST(ImageIo, RawHeaderLayout) {
  const auto dir = scratch_dir("io_header");
  save_image(dir / "a.f32", Image(3, 5, 1.0f), ImageFormat::rawf32);
  const auto bytes = read_bytes(dir / "a.f32");
  ASSERT_EQ(bytes.size(), 16u + 15u * 4u);
  const unsigned char expected[16] = {'D', 'I', 'M', 'G', 3, 0, 0, 0, 5, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(std::memcmp(bytes.data(), expected, 16), 0);
}

TEST(ImageIo, RawDimensionMismatchIsRejected) {
  const auto dir = scratch_dir("io_mismatch");
  save_image(dir / "a.f32", Image(4, 4, 0.25f), ImageFormat::rawf32);
  auto bytes = read_bytes(dir / "a.f32");
  auto shorter = bytes;
  shorter.resize(bytes.size() - 4);
  write_bytes(dir / "short.f32", shorter);
  EXPECT_THROW(load_image(dir / "short.f32"), DimensionError);
  auto longer = bytes;
  longer.insert(longer.end(), 4, '\0');
  write_bytes(dir / "long.f32", longer);
  EXPECT_THROW(load_image(dir / "long.f32"), DimensionError);
}

TEST(ImageIo, LoadsFullSizeRaster) {
  const auto dir = scratch_dir("io_256");
  Image img(256, 256);
  for (std::size_t r = 0; r < 256; ++r)
    for (std::size_t c = 0; c < 256; ++c) img(r, c) = float((r + c) % 256) / 255.0f;
  save_image(dir / "raster.png", img, ImageFormat::png8);
  const Image back = load_image(dir / "raster.png");
  EXPECT_EQ(back.rows(), 256u);
  EXPECT_EQ(back.cols(), 256u);
  EXPECT_EQ(back, img);
}

TEST(ImageIo, Png8QuantizationErrorBound) {
  const auto dir = scratch_dir("io_png8");
  const Image img = random_image(32, 24, 4);
  save_image(dir / "a.png", img, ImageFormat::png8);
  const Image back = load_image(dir / "a.png");
  EXPECT_LE(max_abs_diff(back, img), 1.0 / (2.0 * 255.0) + 1e-7);
}

TEST(ImageIo, Png16UsesFullScale) {
  const auto dir = scratch_dir("io_png16");
  Image img(2, 2, std::vector<float>{0.0f, 1.0f, 0.5f, 1.0f / 65535.0f});
  save_image(dir / "a.png", img, ImageFormat::png16);
  const Image back = load_image(dir / "a.png");
  EXPECT_EQ(back(0, 0), 0.0f);
  EXPECT_EQ(back(0, 1), 1.0f);
  EXPECT_EQ(back(1, 0), float(32768.0 / 65535.0));
  EXPECT_EQ(back(1, 1), float(1.0 / 65535.0));
  const Image rnd = random_image(9, 7, 5);
  save_image(dir / "b.png", rnd, ImageFormat::png16);
  EXPECT_LE(max_abs_diff(load_image(dir / "b.png"), rnd), 1.0 / (2.0 * 65535.0) + 1e-7);
}

TEST(ImageIo, SaveClampsOutOfRange) {
  const auto dir = scratch_dir("io_clamp");
  save_image(dir / "a.png", Image(1, 2, std::vector<float>{-0.3f, 1.7f}), ImageFormat::png8);
  EXPECT_EQ(load_image(dir / "a.png"), Image(1, 2, std::vector<float>{0.0f, 1.0f}));
}

TEST(ImageIo, Errors) {
  const auto dir = scratch_dir("io_errors");
  EXPECT_THROW(load_image(dir / "missing.png"), IoError);
  write_bytes(dir / "junk.png", {'n', 'o', 't', ' ', 'a', 'n', ' ', 'i', 'm', 'g'});
  EXPECT_THROW(load_image(dir / "junk.png"), FormatError);
  auto png = std::vector<char>{};
  save_image(dir / "ok.png", Image(8, 8, 0.2f), ImageFormat::png8);
  png = read_bytes(dir / "ok.png");
  png.resize(png.size() / 2);
  write_bytes(dir / "trunc.png", png);
  EXPECT_THROW(load_image(dir / "trunc.png"), FormatError);
  EXPECT_THROW(save_image(dir / "no_such_dir" / "a.png", Image(2, 2), ImageFormat::png8), IoError);
  EXPECT_THROW(parse_image_format("jpeg"), FormatError);
  EXPECT_THROW(format_for_path("a.bmp"), FormatError);
  EXPECT_EQ(format_for_path("x/a.f32"), ImageFormat::rawf32);
}
