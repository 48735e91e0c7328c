#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fracbnn/bitpack.hpp"
#include "fracbnn/image.hpp"

namespace fracbnn {

// Thermometer resolution: each '1' stands for `resolution` intensity units.
class ThermometerConfig {
 public:
  explicit ThermometerConfig(int resolution = 8) : resolution_(resolution) {
    if (resolution < 1 || resolution > 255)
      throw std::invalid_argument("thermometer resolution must be in [1,255], got " +
                                  std::to_string(resolution));
  }
  int resolution() const { return resolution_; }
  // ceil(255 / R)
  std::size_t length() const {
    return static_cast<std::size_t>((255 + resolution_ - 1) / resolution_);
  }

 private:
  int resolution_;
};

// round(p / R), halves away from zero (p >= 0).
inline std::size_t thermometer_ones(int p, const ThermometerConfig& cfg) {
  const int r = cfg.resolution();
  return static_cast<std::size_t>((2 * p + r) / (2 * r));
}

// Unipolar thermometer vector of length L; the ones fill the top end,
// i.e. entry j (0-based) is 1 iff j >= L - round(p/R).
inline std::vector<std::uint8_t> thermometer_encode_pixel(int p,
                                                          const ThermometerConfig& cfg) {
  if (p < 0 || p > 255)
    throw std::out_of_range("pixel intensity " + std::to_string(p) +
                            " outside [0,255]");
  const std::size_t len = cfg.length();
  const std::size_t ones = std::min(thermometer_ones(p, cfg), len);
  std::vector<std::uint8_t> tv(len, 0);
  for (std::size_t j = len - ones; j < len; ++j) tv[j] = 1;
  return tv;
}

// Packs an RGB image as 3*L bipolar channels ordered [R bits | G bits | B bits].
inline PackedBitPlane encode_image_thermometer(const Image& img,
                                               const ThermometerConfig& cfg) {
  if (img.empty()) throw std::invalid_argument("cannot encode an empty image");
  const std::size_t len = cfg.length();
  PackedBitPlane plane(Dims{3 * len, img.height, img.width});
  for (std::size_t h = 0; h < img.height; ++h) {
    for (std::size_t w = 0; w < img.width; ++w) {
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t ones = std::min(thermometer_ones(img.pixel(h, w, c), cfg), len);
        for (std::size_t j = len - ones; j < len; ++j) plane.set(c * len + j, h, w, true);
      }
    }
  }
  return plane;
}

// 24 bipolar channels: the 8 binary digits of each colour, MSB first.
inline PackedBitPlane encode_image_bitplane(const Image& img) {
  if (img.empty()) throw std::invalid_argument("cannot encode an empty image");
  PackedBitPlane plane(Dims{24, img.height, img.width});
  for (std::size_t h = 0; h < img.height; ++h)
    for (std::size_t w = 0; w < img.width; ++w)
      for (std::size_t c = 0; c < 3; ++c) {
        const unsigned p = img.pixel(h, w, c);
        for (std::size_t b = 0; b < 8; ++b)
          if ((p >> (7 - b)) & 1u) plane.set(c * 8 + b, h, w, true);
      }
  return plane;
}

// ---------------------------------------------------------------------------
// Pre/post weight-binarization dot-product correlation.

enum class InputEncoder { thermometer, bitplane, rgb };

inline std::string to_string(InputEncoder e) {
  switch (e) {
    case InputEncoder::thermometer: return "thermometer";
    case InputEncoder::bitplane: return "bitplane";
    case InputEncoder::rgb: return "rgb";
  }
  return "?";
}

struct CorrelationSetup {
  InputEncoder encoder = InputEncoder::thermometer;
  ThermometerConfig thermometer{8};
  std::size_t windows = 256;  // sampled 3x3 windows; each pairs with every kernel
  std::uint64_t seed = 1;
};

// Channels per pixel produced by an encoder.
inline std::size_t encoded_channels(const CorrelationSetup& s) {
  switch (s.encoder) {
    case InputEncoder::thermometer: return 3 * s.thermometer.length();
    case InputEncoder::bitplane: return 24;
    case InputEncoder::rgb: return 3;
  }
  return 0;
}

// Real-valued 3x3 kernels flattened as [tap][channel].
using RealKernel = std::vector<double>;

inline std::vector<RealKernel> gaussian_kernels(std::size_t count, std::size_t channels,
                                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<RealKernel> out(count, RealKernel(9 * channels));
  for (auto& k : out)
    for (auto& v : k) v = normal(rng);
  return out;
}

struct CorrelationResult {
  std::optional<double> pearson;  // empty when either axis has zero variance
  std::size_t pairs = 0;
  bool degenerate() const { return !pearson.has_value(); }
};

inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  if (n < 2 || b.size() != n) return std::nullopt;
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0 || sbb <= 0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

namespace detail {

// Encoded 3x3 window at top-left (h, w), flattened [tap][channel].
inline std::vector<double> encode_window(const Image& img, std::size_t h, std::size_t w,
                                         const CorrelationSetup& s) {
  const std::size_t ch = encoded_channels(s);
  std::vector<double> out;
  out.reserve(9 * ch);
  for (std::size_t dy = 0; dy < 3; ++dy)
    for (std::size_t dx = 0; dx < 3; ++dx)
      for (std::size_t c = 0; c < 3; ++c) {
        const int p = img.pixel(h + dy, w + dx, c);
        switch (s.encoder) {
          case InputEncoder::thermometer:
            for (auto bit : thermometer_encode_pixel(p, s.thermometer))
              out.push_back(bit ? 1.0 : -1.0);
            break;
          case InputEncoder::bitplane:
            for (int b = 7; b >= 0; --b) out.push_back(((p >> b) & 1) ? 1.0 : -1.0);
            break;
          case InputEncoder::rgb:
            out.push_back((p - 127.5) / 127.5);
            break;
        }
      }
  return out;
}

// Weight binarizer for the experiment: zero taps stay zero so a kernel's
// support is unchanged by binarization.
inline double binarize(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

}  // namespace detail

// Pearson correlation between dot(x, w) and dot(x, sign(w)) over every
// (sampled window, kernel) pair.
inline CorrelationResult correlation_experiment(std::span<const Image> images,
                                                std::span<const RealKernel> kernels,
                                                const CorrelationSetup& setup) {
  if (images.empty() || kernels.empty())
    throw std::invalid_argument("correlation experiment needs images and kernels");
  const std::size_t dim = 9 * encoded_channels(setup);
  for (const auto& k : kernels)
    if (k.size() != dim)
      throw ShapeError("kernel length " + std::to_string(k.size()) + " != " +
                       std::to_string(dim) + " for encoder " + to_string(setup.encoder));
  std::mt19937_64 rng(setup.seed);
  std::vector<double> real_dots, binary_dots;
  real_dots.reserve(setup.windows * kernels.size());
  binary_dots.reserve(setup.windows * kernels.size());
  for (std::size_t s = 0; s < setup.windows; ++s) {
    const Image& img = images[rng() % images.size()];
    if (img.height < 3 || img.width < 3) throw ShapeError("image smaller than a 3x3 window");
    const std::size_t h = rng() % (img.height - 2);
    const std::size_t w = rng() % (img.width - 2);
    const auto x = detail::encode_window(img, h, w, setup);
    for (const auto& k : kernels) {
      double dr = 0, db = 0;
      for (std::size_t i = 0; i < dim; ++i) {
        dr += x[i] * k[i];
        db += x[i] * detail::binarize(k[i]);
      }
      real_dots.push_back(dr);
      binary_dots.push_back(db);
    }
  }
  return {pearson(real_dots, binary_dots), real_dots.size()};
}

}  // namespace fracbnn
