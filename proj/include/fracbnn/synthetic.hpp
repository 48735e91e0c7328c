#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "fracbnn/image.hpp"
#include "fracbnn/model.hpp"
#include "fracbnn/modelfile.hpp"

namespace fracbnn {

namespace detail {

// Portable draws straight from mt19937_64 output, so generated models are
// byte-identical on every platform.
class PortableRng {
 public:
  explicit PortableRng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t bits() { return engine_(); }
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
  }

 private:
  std::mt19937_64 engine_;
};

inline PackedBitPlane random_plane(Dims d, PortableRng& rng) {
  PackedBitPlane p(d);
  const std::size_t tail = d.channels % kLanesPerWord;
  const std::size_t nw = p.words_per_position();
  auto words = p.mutable_words();
  for (std::size_t i = 0; i < words.size(); ++i) {
    words[i] = rng.bits();
    if (tail && i % nw == nw - 1) words[i] &= lane_mask(tail);
  }
  return p;
}

}  // namespace detail

struct SyntheticOptions {
  int resolution = 8;
  std::uint16_t classes = 10;
  // Set the gate thresholds from a calibration pass (median of each
  // channel's base value). When false every gate is left closed.
  bool calibrate_gates = true;
};

// Deterministic pseudo-random model for `topology`. BatchNorm terms are fit
// to a calibration pass so every layer sees roughly unit-variance inputs,
// and each threshold is the median base value of its channel so about half
// of the LSB updates run.
inline Model generate_synthetic(std::uint64_t seed, std::uint16_t topology = kTopologyResNet20,
                                const SyntheticOptions& opt = {}) {
  const NetworkSpec net = network_for(topology, opt.resolution, opt.classes);
  detail::PortableRng rng(seed);
  Model m;
  m.topology = topology;
  m.resolution = static_cast<std::uint8_t>(opt.resolution);
  m.classes = opt.classes;
  for (const auto& b : net.blocks) {
    if (is_conv(b.kind)) {
      ConvLayer l;
      l.kind = b.kind;
      l.in_channels = b.in_channels;
      l.out_channels = b.out_channels;
      l.in_height = b.in_height;
      l.in_width = b.in_width;
      l.geometry = b.geometry;
      for (std::size_t o = 0; o < b.out_channels; ++o)
        l.weights.push_back(
            detail::random_plane({b.in_channels, b.geometry.kernel, b.geometry.kernel}, rng));
      l.params = ChannelParams(b.out_channels);
      for (std::size_t o = 0; o < b.out_channels; ++o) {
        l.params.alpha[o] = q16::from_double(rng.uniform(-2.0, 2.0));
        l.params.beta[o] = q16::from_double(rng.uniform(0.1, 0.5));
        l.params.gamma[o] = q16::from_double(rng.uniform(-2.0, 2.0));
        l.params.act_scale[o] = q16::from_double(rng.uniform(0.4, 0.9));
      }
      m.convs.push_back(std::move(l));
    } else if (b.kind == BlockKind::classifier) {
      m.classifier.in_features = b.in_channels;
      m.classifier.classes = b.out_channels;
      m.classifier.weights.resize(b.in_channels * b.out_channels);
      for (auto& w : m.classifier.weights) w = static_cast<std::int8_t>(rng.integer(-127, 127));
      m.classifier.bias.resize(b.out_channels);
      for (auto& v : m.classifier.bias) v = static_cast<std::int32_t>(rng.integer(-655360, 655360));
    }
  }

  const std::vector<Image> calib = {random_image(net.image_height, net.image_width, seed ^ 0x5eed),
                                    smooth_image(net.image_height, net.image_width, seed + 17)};

  // Layer by layer: thresholds from the gate-closed base values, then
  // BatchNorm from the gated pre-normalization statistics.
  for (std::size_t li = 0; li < m.convs.size(); ++li) {
    ChannelParams& p = m.convs[li].params;
    const std::size_t channels = p.channels();
    const bool fractional = is_fractional(m.convs[li].kind);
    auto run_to_layer = [&](auto&& take) {
      for (const auto& img : calib)
        forward(net, m, img, {}, [&](std::size_t ci, const IntFeatureMap& conv,
                                     const FixedFeatureMap& pre_bn) {
          if (ci < li) return true;
          take(conv, pre_bn);
          return false;
        });
    };
    if (fractional && opt.calibrate_gates) {
      std::vector<std::vector<std::int32_t>> base(channels);
      run_to_layer([&](const IntFeatureMap& conv, const FixedFeatureMap&) {
        const std::size_t hw = conv.dims.positions();
        for (std::size_t c = 0; c < channels; ++c)
          for (std::size_t i = 0; i < hw; ++i) base[c].push_back(conv.values[c * hw + i] / 2);
      });
      for (std::size_t c = 0; c < channels; ++c) {
        auto& v = base[c];
        std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
        p.delta[c] = v[v.size() / 2];
      }
    }
    std::vector<double> sum(channels, 0), sq(channels, 0);
    std::size_t count = 0;
    run_to_layer([&](const IntFeatureMap&, const FixedFeatureMap& pre_bn) {
      const std::size_t hw = pre_bn.dims.positions();
      count += hw;
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < hw; ++i) {
          const double v = q16::to_double(pre_bn.values[c * hw + i]);
          sum[c] += v;
          sq[c] += v * v;
        }
    });
    for (std::size_t c = 0; c < channels; ++c) {
      const double mean = sum[c] / static_cast<double>(count);
      const double var = std::max(sq[c] / static_cast<double>(count) - mean * mean, 1e-2);
      const double scale = 1.0 / std::sqrt(var);
      p.bn_scale[c] = q16::from_double(scale);
      p.bn_bias[c] = q16::from_double(-mean * scale + rng.uniform(-0.25, 0.25));
    }
  }
  return m;
}

// Every gate threshold replaced by `delta` (use the sentinels to force
// all-open or all-closed behaviour).
inline Model with_uniform_gates(Model m, std::int32_t delta) {
  for (auto& l : m.convs)
    if (is_fractional(l.kind)) std::fill(l.params.delta.begin(), l.params.delta.end(), delta);
  return m;
}

}  // namespace fracbnn
