#pragma once

// PNG (8/16-bit grayscale) and rawf32 image files.
//
// rawf32 layout, little-endian:
//   bytes 0..3   magic "DIMG"
//   bytes 4..7   u32 rows (J1)
//   bytes 8..11  u32 cols (J2)
//   bytes 12..15 u32 reserved, written as 0
//   then rows*cols IEEE-754 float32, row-major

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cerrno>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "diamond/error.hpp"
#include "diamond/image.hpp"

namespace diamond {

static_assert(std::endian::native == std::endian::little, "rawf32 I/O assumes a little-endian host");

enum class ImageFormat { png8, png16, rawf32 };

inline std::string to_string(ImageFormat f) {
  switch (f) {
    case ImageFormat::png8: return "png8";
    case ImageFormat::png16: return "png16";
    case ImageFormat::rawf32: return "rawf32";
  }
  return "?";
}

inline ImageFormat parse_image_format(const std::string& name) {
  if (name == "png8") return ImageFormat::png8;
  if (name == "png16") return ImageFormat::png16;
  if (name == "rawf32") return ImageFormat::rawf32;
  throw FormatError("unsupported image format '" + name + "' (expected png8, png16 or rawf32)");
}

inline std::string file_extension(ImageFormat f) { return f == ImageFormat::rawf32 ? ".f32" : ".png"; }

namespace detail {

inline constexpr std::array<char, 4> kRawMagic{'D', 'I', 'M', 'G'};
inline constexpr std::array<unsigned char, 8> kPngSignature{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngHeader {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 0;
  int color_type = 0;
};

// libpng reports errors by longjmp; only trivially destructible state lives
// inside the setjmp scopes below.
class PngReader {
 public:
  explicit PngReader(std::FILE* fp) {
    png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png_) info_ = png_create_info_struct(png_);
    if (!png_ || !info_) throw IoError("libpng: out of memory");
    png_init_io(png_, fp);
  }
  ~PngReader() { png_destroy_read_struct(&png_, &info_, nullptr); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;

  bool read_header(PngHeader& h) {
    if (setjmp(png_jmpbuf(png_))) return false;
    png_read_info(png_, info_);
    h.width = png_get_image_width(png_, info_);
    h.height = png_get_image_height(png_, info_);
    h.bit_depth = png_get_bit_depth(png_, info_);
    h.color_type = png_get_color_type(png_, info_);
    if (h.color_type == PNG_COLOR_TYPE_GRAY && h.bit_depth < 8) {
      png_set_expand_gray_1_2_4_to_8(png_);
    }
    if (png_get_valid(png_, info_, PNG_INFO_tRNS)) png_set_strip_alpha(png_);
    png_read_update_info(png_, info_);
    return true;
  }

  bool read_rows(png_bytep* rows) {
    if (setjmp(png_jmpbuf(png_))) return false;
    png_read_image(png_, rows);
    png_read_end(png_, nullptr);
    return true;
  }

 private:
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

class PngWriter {
 public:
  explicit PngWriter(std::FILE* fp) {
    png_ = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png_) info_ = png_create_info_struct(png_);
    if (!png_ || !info_) throw IoError("libpng: out of memory");
    png_init_io(png_, fp);
  }
  ~PngWriter() { png_destroy_write_struct(&png_, &info_); }
  PngWriter(const PngWriter&) = delete;
  PngWriter& operator=(const PngWriter&) = delete;

  bool write(png_uint_32 width, png_uint_32 height, int bit_depth, png_bytep* rows) {
    if (setjmp(png_jmpbuf(png_))) return false;
    png_set_IHDR(png_, info_, width, height, bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png_, info_);
    png_write_image(png_, rows);
    png_write_end(png_, nullptr);
    return true;
  }

 private:
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr fp(std::fopen(path.c_str(), mode));
  if (!fp) throw IoError("cannot open '" + path.string() + "': " + std::strerror(errno));
  return fp;
}

inline Image load_png(const std::filesystem::path& path) {
  auto fp = open_file(path, "rb");
  std::array<unsigned char, 8> sig{};
  if (std::fread(sig.data(), 1, sig.size(), fp.get()) != sig.size() || sig != kPngSignature) {
    throw FormatError("'" + path.string() + "' is not a PNG file");
  }
  std::rewind(fp.get());

  PngReader reader(fp.get());
  PngHeader h;
  if (!reader.read_header(h)) throw FormatError("corrupt PNG header in '" + path.string() + "'");
  if (h.color_type != PNG_COLOR_TYPE_GRAY && h.color_type != PNG_COLOR_TYPE_GRAY_ALPHA) {
    throw FormatError("'" + path.string() + "' is not a grayscale PNG");
  }
  const int depth = std::max(h.bit_depth, 8);
  const std::size_t channels = h.color_type == PNG_COLOR_TYPE_GRAY_ALPHA ? 2 : 1;
  const std::size_t bytes_per_sample = depth / 8;
  const std::size_t row_bytes = std::size_t(h.width) * channels * bytes_per_sample;

  std::vector<png_byte> buffer(row_bytes * h.height);
  std::vector<png_bytep> rows(h.height);
  for (png_uint_32 r = 0; r < h.height; ++r) rows[r] = buffer.data() + r * row_bytes;
  if (!reader.read_rows(rows.data())) throw FormatError("corrupt PNG data in '" + path.string() + "'");

  const double scale = 1.0 / double((1u << depth) - 1u);
  Image img(h.height, h.width);
  auto px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    const png_byte* s = buffer.data() + i * channels * bytes_per_sample;
    const unsigned value = depth == 16 ? (unsigned(s[0]) << 8) | s[1] : s[0];
    px[i] = float(value * scale);
  }
  return img;
}

inline void save_png(const std::filesystem::path& path, const Image& img, int depth) {
  const unsigned max_code = (1u << depth) - 1u;
  const std::size_t bytes_per_sample = depth / 8;
  const std::size_t row_bytes = img.cols() * bytes_per_sample;
  std::vector<png_byte> buffer(row_bytes * img.rows());
  auto px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    const float v = std::clamp(px[i], 0.0f, 1.0f);
    const auto code = unsigned(std::lround(double(v) * max_code));
    png_byte* d = buffer.data() + i * bytes_per_sample;
    if (depth == 16) {
      d[0] = png_byte(code >> 8);
      d[1] = png_byte(code & 0xff);
    } else {
      d[0] = png_byte(code);
    }
  }
  std::vector<png_bytep> rows(img.rows());
  for (std::size_t r = 0; r < img.rows(); ++r) rows[r] = buffer.data() + r * row_bytes;

  auto fp = open_file(path, "wb");
  PngWriter writer(fp.get());
  if (!writer.write(png_uint_32(img.cols()), png_uint_32(img.rows()), depth, rows.data())) {
    throw IoError("failed to encode PNG '" + path.string() + "'");
  }
  if (std::fflush(fp.get()) != 0) throw IoError("failed to write '" + path.string() + "'");
}

inline std::uint32_t read_u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

inline void write_u32le(unsigned char* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}

inline Image load_rawf32(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::array<unsigned char, 16> header{};
  if (!in.read(reinterpret_cast<char*>(header.data()), header.size())) {
    throw FormatError("'" + path.string() + "': truncated rawf32 header");
  }
  if (!std::equal(kRawMagic.begin(), kRawMagic.end(), header.begin())) {
    throw FormatError("'" + path.string() + "': bad rawf32 magic");
  }
  const std::uint32_t rows = read_u32le(header.data() + 4);
  const std::uint32_t cols = read_u32le(header.data() + 8);
  if (rows == 0 || cols == 0) throw DimensionError("'" + path.string() + "': zero dimension in header");

  const std::size_t count = std::size_t(rows) * cols;
  std::vector<float> data(count);
  in.read(reinterpret_cast<char*>(data.data()), std::streamsize(count * sizeof(float)));
  if (std::size_t(in.gcount()) != count * sizeof(float)) {
    throw DimensionError("'" + path.string() + "': payload shorter than header dimensions " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DimensionError("'" + path.string() + "': payload longer than header dimensions");
  }
  return Image(rows, cols, std::move(data));
}

inline void save_rawf32(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  std::array<unsigned char, 16> header{};
  std::copy(kRawMagic.begin(), kRawMagic.end(), header.begin());
  write_u32le(header.data() + 4, std::uint32_t(img.rows()));
  write_u32le(header.data() + 8, std::uint32_t(img.cols()));
  out.write(reinterpret_cast<const char*>(header.data()), header.size());
  out.write(reinterpret_cast<const char*>(img.pixels().data()),
            std::streamsize(img.size() * sizeof(float)));
  if (!out.flush()) throw IoError("failed to write '" + path.string() + "'");
}

}  // namespace detail

/// Loads a grayscale PNG (any bit depth up to 16) or rawf32 file, detected by
/// its magic bytes. Integer samples s of depth B map to s / (2^B - 1).
inline Image load_image(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open '" + path.string() + "'");
  std::array<char, 4> magic{};
  probe.read(magic.data(), magic.size());
  if (probe.gcount() == 4 && magic == detail::kRawMagic) return detail::load_rawf32(path);
  return detail::load_png(path);
}

/// Saves `img`. PNG formats clamp to [0, 1] and quantize with round(v * (2^B - 1));
/// rawf32 stores the floats bit-exactly.
inline void save_image(const std::filesystem::path& path, const Image& img, ImageFormat format) {
  switch (format) {
    case ImageFormat::png8: detail::save_png(path, img, 8); return;
    case ImageFormat::png16: detail::save_png(path, img, 16); return;
    case ImageFormat::rawf32: detail::save_rawf32(path, img); return;
  }
}

/// png8 for ".png", rawf32 for ".f32"/".raw"; anything else is rejected.
inline ImageFormat format_for_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".png") return ImageFormat::png8;
  if (ext == ".f32" || ext == ".raw") return ImageFormat::rawf32;
  throw FormatError("cannot infer image format from extension '" + ext + "'");
}

}  // namespace diamond
