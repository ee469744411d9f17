#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "diamond/error.hpp"
#include "diamond/image.hpp"

namespace diamond::nn {

struct Shape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t count() const noexcept { return channels * height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

/// Feature map (channels, height, width), row-major within each channel.
class Tensor {
 public:
  explicit Tensor(Shape shape, float fill = 0.0f) : shape_(shape), data_(shape.count(), fill) {}
  Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.count()) throw DimensionError("tensor data does not match shape " + to_string(shape_));
  }

  static Tensor from_image(const Image& img) {
    return Tensor({1, img.rows(), img.cols()}, std::vector<float>(img.pixels().begin(), img.pixels().end()));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t channels() const noexcept { return shape_.channels; }
  std::size_t height() const noexcept { return shape_.height; }
  std::size_t width() const noexcept { return shape_.width; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const float> values() const noexcept { return data_; }
  std::span<float> values() noexcept { return data_; }

  std::span<const float> plane(std::size_t c) const noexcept {
    return std::span<const float>(data_).subspan(c * shape_.height * shape_.width, shape_.height * shape_.width);
  }
  std::span<float> plane(std::size_t c) noexcept {
    return std::span<float>(data_).subspan(c * shape_.height * shape_.width, shape_.height * shape_.width);
  }

  float operator()(std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }
  float& operator()(std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }

  Image to_image() const {
    if (shape_.channels != 1) throw DimensionError("only single-channel tensors convert to images");
    return Image(shape_.height, shape_.width, data_);
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

}  // namespace diamond::nn
