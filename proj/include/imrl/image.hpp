#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "imrl/errors.hpp"

namespace imrl {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  bool operator==(const Rgb&) const = default;
};

/// 8-bit RGB image, interleaved, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(int w, int h, Rgb fill = {}) : width(w), height(h), data(static_cast<std::size_t>(w * h * 3)) {
    if (w < 1 || h < 1) throw ShapeError("image dimensions must be positive");
    for (int i = 0; i < w * h; ++i) set(i % w, i / w, fill);
  }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  Rgb at(int x, int y) const {
    const std::size_t i = index(x, y);
    return {data[i], data[i + 1], data[i + 2]};
  }
  void set(int x, int y, Rgb c) {
    const std::size_t i = index(x, y);
    data[i] = c.r;
    data[i + 1] = c.g;
    data[i + 2] = c.b;
  }

  /// Channel-major (C, H, W) floats in [0, 1].
  std::vector<double> normalized_chw() const {
    std::vector<double> out(data.size());
    const std::size_t plane = static_cast<std::size_t>(width * height);
    for (std::size_t p = 0; p < plane; ++p)
      for (std::size_t c = 0; c < 3; ++c) out[c * plane + p] = data[p * 3 + c] / 255.0;
    return out;
  }

  bool operator==(const RgbImage&) const = default;

 private:
  std::size_t index(int x, int y) const { return (static_cast<std::size_t>(y) * width + x) * 3; }
};

/// Every `factor`-th pixel in both directions.
inline RgbImage subsample(const RgbImage& image, int factor) {
  RgbImage out(image.width / factor, image.height / factor);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.set(x, y, image.at(x * factor, y * factor));
  return out;
}

/// Mean over non-overlapping factor x factor blocks.
inline RgbImage average_pool(const RgbImage& image, int factor) {
  RgbImage out(image.width / factor, image.height / factor);
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      int r = 0, g = 0, b = 0;
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx) {
          const Rgb c = image.at(x * factor + dx, y * factor + dy);
          r += c.r;
          g += c.g;
          b += c.b;
        }
      out.set(x, y, {static_cast<std::uint8_t>(std::lround(r * inv)), static_cast<std::uint8_t>(std::lround(g * inv)),
                     static_cast<std::uint8_t>(std::lround(b * inv))});
    }
  return out;
}

/// size x size window centred at (cx, cy); pixels outside the source are black.
inline RgbImage crop_centered(const RgbImage& image, int cx, int cy, int size) {
  RgbImage out(size, size);
  const int x0 = cx - size / 2;
  const int y0 = cy - size / 2;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      if (image.contains(x0 + x, y0 + y)) out.set(x, y, image.at(x0 + x, y0 + y));
  return out;
}

inline std::uint8_t clamp_channel(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace imrl
