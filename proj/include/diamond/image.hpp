#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "diamond/error.hpp"

namespace diamond {

/// Single-channel float raster, row-major, nominal range [0, 1].
///
/// Rows run along the first index (j1), columns along the second (j2).
/// An Image always holds at least one pixel.
class Image {
 public:
  Image(std::size_t rows, std::size_t cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    check_shape();
  }

  Image(std::size_t rows, std::size_t cols, std::vector<float> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    check_shape();
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("image data length " + std::to_string(data_.size()) +
                           " does not match " + std::to_string(rows_) + "x" +
                           std::to_string(cols_));
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const float> pixels() const noexcept { return data_; }
  std::span<float> pixels() noexcept { return data_; }

  float operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  float& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }

  float at(std::size_t r, std::size_t c) const {
    if (r >= rows_ || c >= cols_) throw DimensionError("pixel index out of range");
    return data_[r * cols_ + c];
  }

  bool same_shape(const Image& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  void check_shape() const {
    if (rows_ == 0 || cols_ == 0) throw DimensionError("image dimensions must be positive");
  }

  std::size_t rows_;
  std::size_t cols_;
  std::vector<float> data_;
};

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a.rows()) +
                         "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
  }
}

// Elementwise helpers. All results are new images.

template <typename Fn>
Image transform(const Image& a, Fn&& fn) {
  Image out(a.rows(), a.cols());
  std::ranges::transform(a.pixels(), out.pixels().begin(), fn);
  return out;
}

template <typename Fn>
Image transform(const Image& a, const Image& b, Fn&& fn) {
  require_same_shape(a, b, "transform");
  Image out(a.rows(), a.cols());
  std::ranges::transform(a.pixels(), b.pixels(), out.pixels().begin(), fn);
  return out;
}

inline Image operator+(const Image& a, const Image& b) {
  return transform(a, b, [](float x, float y) { return x + y; });
}
inline Image operator-(const Image& a, const Image& b) {
  return transform(a, b, [](float x, float y) { return x - y; });
}
inline Image operator*(float s, const Image& a) {
  return transform(a, [s](float x) { return s * x; });
}

inline double frobenius_norm(const Image& a) {
  double acc = 0.0;
  for (float v : a.pixels()) acc += double(v) * double(v);
  return std::sqrt(acc);
}

inline double distance(const Image& a, const Image& b) {
  require_same_shape(a, b, "distance");
  double acc = 0.0;
  auto pa = a.pixels();
  auto pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = double(pa[i]) - double(pb[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

inline double max_abs_diff(const Image& a, const Image& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  auto pa = a.pixels();
  auto pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i) m = std::max(m, std::abs(double(pa[i]) - double(pb[i])));
  return m;
}

inline double mean(const Image& a) {
  double acc = 0.0;
  for (float v : a.pixels()) acc += v;
  return acc / double(a.size());
}

inline bool all_finite(const Image& a) {
  return std::ranges::all_of(a.pixels(), [](float v) { return std::isfinite(v); });
}

inline Image clamp01(const Image& a) {
  return transform(a, [](float v) { return std::clamp(v, 0.0f, 1.0f); });
}

struct PatchOffset {
  std::size_t row;
  std::size_t col;
  friend bool operator==(const PatchOffset&, const PatchOffset&) = default;
};

struct PatchSet {
  std::size_t patch_size = 0;
  std::vector<Image> patches;
  std::vector<PatchOffset> offsets;
};

inline constexpr std::size_t kDefaultPatchSize = 64;

/// Square patches in row-major scan order. Every patch lies fully inside `img`;
/// trailing rows/cols that do not fit a full stride step are skipped.
inline PatchSet extract_patches(const Image& img, std::size_t size = kDefaultPatchSize,
                                std::size_t stride = kDefaultPatchSize) {
  if (size == 0 || size > std::min(img.rows(), img.cols())) {
    throw InvalidArgument("patch size " + std::to_string(size) + " exceeds image " +
                          std::to_string(img.rows()) + "x" + std::to_string(img.cols()));
  }
  if (stride == 0) throw InvalidArgument("patch stride must be >= 1");

  PatchSet set;
  set.patch_size = size;
  const std::size_t n_r = (img.rows() - size) / stride + 1;
  const std::size_t n_c = (img.cols() - size) / stride + 1;
  set.patches.reserve(n_r * n_c);
  set.offsets.reserve(n_r * n_c);
  for (std::size_t pr = 0; pr < n_r; ++pr) {
    for (std::size_t pc = 0; pc < n_c; ++pc) {
      const std::size_t r0 = pr * stride;
      const std::size_t c0 = pc * stride;
      Image patch(size, size);
      for (std::size_t r = 0; r < size; ++r) {
        auto src = img.pixels().subspan((r0 + r) * img.cols() + c0, size);
        std::ranges::copy(src, patch.pixels().begin() + r * size);
      }
      set.patches.push_back(std::move(patch));
      set.offsets.push_back({r0, c0});
    }
  }
  return set;
}

}  // namespace diamond
