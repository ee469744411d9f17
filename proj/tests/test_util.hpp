#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "diamond/image.hpp"

namespace diamond::testing {

inline double uniform01(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

inline Image random_image(std::size_t rows, std::size_t cols, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  Image img(rows, cols);
  for (float& v : img.pixels()) v = lo + (hi - lo) * float(uniform01(rng));
  return img;
}

// Piecewise-constant test scene: background, a bright rectangle and a disc.
inline Image phantom(std::size_t n = 64) {
  Image img(n, n, 0.2f);
  const double k = double(n) / 64.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double y = double(r) / k, x = double(c) / k;
      if (y >= 12 && y < 40 && x >= 10 && x < 30) img(r, c) = 0.8f;
      if ((y - 44) * (y - 44) + (x - 42) * (x - 42) < 144.0) img(r, c) = 0.55f;
    }
  }
  return img;
}

// Fresh directory under the build tree, named after the running test.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::path(DIAMOND_TEST_TMPDIR) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace diamond::testing
