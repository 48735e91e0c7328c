#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace fracbnn {

// 8-bit RGB image, row-major with interleaved channels.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(std::size_t h, std::size_t w) : height(h), width(w), rgb(h * w * 3, 0) {}
  Image(std::size_t h, std::size_t w, std::vector<std::uint8_t> data)
      : height(h), width(w), rgb(std::move(data)) {
    if (rgb.size() != h * w * 3)
      throw std::invalid_argument("image buffer holds " +
                                  std::to_string(rgb.size()) +
                                  " bytes, expected " +
                                  std::to_string(h * w * 3));
  }

  bool empty() const { return height == 0 || width == 0; }

  std::uint8_t pixel(std::size_t h, std::size_t w, std::size_t c) const {
    return rgb[(h * width + w) * 3 + c];
  }
  std::uint8_t& pixel(std::size_t h, std::size_t w, std::size_t c) {
    return rgb[(h * width + w) * 3 + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

// Uniform noise image.
inline Image random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image img(h, w);
  for (auto& b : img.rgb) b = static_cast<std::uint8_t>(rng() >> 56);
  return img;
}

// Natural-image stand-in: per-channel smooth gradient plus a few Gaussian
// blobs plus mild noise, so neighbouring pixels are correlated.
inline Image smooth_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Image img(h, w);
  for (std::size_t c = 0; c < 3; ++c) {
    const double base = 255.0 * unit(rng);
    const double gx = 80.0 * normal(rng);
    const double gy = 80.0 * normal(rng);
    struct Blob { double cx, cy, s, a; };
    Blob blobs[3];
    for (auto& b : blobs)
      b = {unit(rng), unit(rng), 0.05 + 0.25 * unit(rng), 60.0 * normal(rng)};
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double fy = static_cast<double>(y) / h;
        const double fx = static_cast<double>(x) / w;
        double v = base + gx * (fx - 0.5) + gy * (fy - 0.5);
        for (const auto& b : blobs) {
          const double d2 = (fx - b.cx) * (fx - b.cx) + (fy - b.cy) * (fy - b.cy);
          v += b.a * std::exp(-d2 / (2 * b.s * b.s));
        }
        v += 8.0 * normal(rng);
        img.pixel(y, x, c) =
            static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
      }
    }
  }
  return img;
}

}  // namespace fracbnn
