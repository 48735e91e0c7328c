#pragma once

// Slow dense reference implementations. Nothing here calls into the packed
// kernels or the q16 helpers: values are unpacked with local bit
// arithmetic, every convolution is a textbook loop over int64, and every
// fixed-point result is formed as an exact rational before rounding.

#include <chrono>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fracbnn/bitpack.hpp"
#include "fracbnn/image.hpp"
#include "fracbnn/modelfile.hpp"
#include "fracbnn/network.hpp"

namespace fracbnn::oracle {

struct DenseTensor {
  Dims dims{};
  std::vector<std::int64_t> values;

  DenseTensor() = default;
  explicit DenseTensor(Dims d, std::int64_t fill = 0) : dims(d), values(d.volume(), fill) {}

  std::int64_t& at(std::size_t c, std::size_t h, std::size_t w) {
    return values[(c * dims.height + h) * dims.width + w];
  }
  std::int64_t at(std::size_t c, std::size_t h, std::size_t w) const {
    return values[(c * dims.height + h) * dims.width + w];
  }
};

// Exact value num/den (den > 0), in units of 2^-16 for fixed-point results.
struct Rational {
  __int128 num = 0;
  __int128 den = 1;
};

inline constexpr std::int64_t kOne = 65536;

// floor(a / b) for b > 0.
inline __int128 floor_div(__int128 a, __int128 b) {
  __int128 q = a / b;
  if ((a % b != 0) && (a < 0)) --q;
  return q;
}

// Nearest integer to r, ties to even.
inline __int128 round_half_even(const Rational& r) {
  const __int128 fl = floor_div(r.num, r.den);
  const __int128 twice_frac = 2 * (r.num - fl * r.den);
  if (twice_frac > r.den) return fl + 1;
  if (twice_frac < r.den) return fl;
  return (fl % 2 == 0) ? fl : fl + 1;
}

inline std::int64_t clamp_i32(__int128 v) {
  constexpr __int128 lo = std::numeric_limits<std::int32_t>::min();
  constexpr __int128 hi = std::numeric_limits<std::int32_t>::max();
  return static_cast<std::int64_t>(v < lo ? lo : (v > hi ? hi : v));
}

// Correctly rounded, saturated Q16.16 raw value of r.
inline std::int64_t to_q16(const Rational& r) { return clamp_i32(round_half_even(r)); }

// True when `engine` is within one unit in the last place of the exact
// value, or is the saturated bound for an out-of-range exact value.
inline bool within_one_ulp(std::int64_t engine, const Rational& exact) {
  constexpr __int128 lo = std::numeric_limits<std::int32_t>::min();
  constexpr __int128 hi = std::numeric_limits<std::int32_t>::max();
  if (exact.num > hi * exact.den) return engine == hi;
  if (exact.num < lo * exact.den) return engine == lo;
  __int128 diff = __int128{engine} * exact.den - exact.num;
  if (diff < 0) diff = -diff;
  return diff <= exact.den;
}

// ---------------------------------------------------------------------------
// Unpacking and encoding

inline DenseTensor from_plane(const PackedBitPlane& p) {
  DenseTensor t(p.dims());
  const auto words = p.words();
  const std::size_t per = p.words_per_position();
  for (std::size_t h = 0; h < p.height(); ++h)
    for (std::size_t w = 0; w < p.width(); ++w)
      for (std::size_t c = 0; c < p.channels(); ++c) {
        const std::uint64_t word = words[(h * p.width() + w) * per + c / 64];
        t.at(c, h, w) = ((word >> (c % 64)) & 1u) ? 1 : -1;
      }
  return t;
}

// Thermometer bits of intensity p: entry i (1-based) is 1 iff
// L - round(p/R) < i <= L, round half up.
inline std::vector<int> thermometer(int p, int resolution) {
  const int len = 255 / resolution + (255 % resolution != 0);
  int ones = p / resolution;
  if (2 * (p % resolution) >= resolution) ++ones;
  std::vector<int> tv(static_cast<std::size_t>(len));
  for (int i = 1; i <= len; ++i) tv[static_cast<std::size_t>(i - 1)] = (len - ones < i) ? 1 : 0;
  return tv;
}

// Bipolar thermometer tensor of an image, channels [R | G | B].
inline DenseTensor encode_thermometer(const Image& img, int resolution) {
  const std::size_t len = thermometer(0, resolution).size();
  DenseTensor t(Dims{3 * len, img.height, img.width});
  for (std::size_t h = 0; h < img.height; ++h)
    for (std::size_t w = 0; w < img.width; ++w)
      for (std::size_t c = 0; c < 3; ++c) {
        const auto tv = thermometer(img.rgb[(h * img.width + w) * 3 + c], resolution);
        for (std::size_t j = 0; j < len; ++j) t.at(c * len + j, h, w) = tv[j] ? 1 : -1;
      }
  return t;
}

// ---------------------------------------------------------------------------
// Convolutions

// Direct convolution; out-of-bounds taps contribute 0.
inline DenseTensor conv2d(const DenseTensor& x, const std::vector<DenseTensor>& w,
                          std::size_t k, std::size_t stride, std::size_t pad) {
  for (const auto& wt : w)
    if (wt.dims != Dims{x.dims.channels, k, k}) throw ShapeError("oracle conv2d: weight shape");
  const std::size_t oh_n = (x.dims.height + 2 * pad - k) / stride + 1;
  const std::size_t ow_n = (x.dims.width + 2 * pad - k) / stride + 1;
  DenseTensor out(Dims{w.size(), oh_n, ow_n});
  for (std::size_t o = 0; o < w.size(); ++o)
    for (std::size_t oh = 0; oh < oh_n; ++oh)
      for (std::size_t ow = 0; ow < ow_n; ++ow) {
        std::int64_t acc = 0;
        for (std::size_t c = 0; c < x.dims.channels; ++c)
          for (std::size_t kh = 0; kh < k; ++kh)
            for (std::size_t kw = 0; kw < k; ++kw) {
              const long ih = static_cast<long>(oh * stride + kh) - static_cast<long>(pad);
              const long iw = static_cast<long>(ow * stride + kw) - static_cast<long>(pad);
              if (ih < 0 || iw < 0 || ih >= static_cast<long>(x.dims.height) ||
                  iw >= static_cast<long>(x.dims.width))
                continue;
              acc += x.at(c, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw)) *
                     w[o].at(c, kh, kw);
            }
        out.at(o, oh, ow) = acc;
      }
  return out;
}

struct FracConvOutput {
  DenseTensor output;
  std::vector<std::uint8_t> updated;  // CHW
  std::size_t updated_count = 0;
};

// Gated two-phase law over a dense 2-bit input with values in {-3,-1,1,3}:
//   O = 2*O_msb               if O_msb <= delta
//   O = 2*O_msb + O_lsb       otherwise
// with msb = +1 for positive values, lsb = x - 2*msb.
inline FracConvOutput frac_conv(const DenseTensor& x2, const std::vector<DenseTensor>& w,
                                std::size_t k, std::size_t stride, std::size_t pad,
                                std::span<const std::int32_t> delta) {
  DenseTensor msb(x2.dims), lsb(x2.dims);
  for (std::size_t i = 0; i < x2.values.size(); ++i) {
    const std::int64_t v = x2.values[i];
    if (v != -3 && v != -1 && v != 1 && v != 3) throw std::invalid_argument("not a 2-bit level");
    msb.values[i] = v > 0 ? 1 : -1;
    lsb.values[i] = v - 2 * msb.values[i];
  }
  const DenseTensor base = conv2d(msb, w, k, stride, pad);
  const DenseTensor low = conv2d(lsb, w, k, stride, pad);
  FracConvOutput r{DenseTensor(base.dims), std::vector<std::uint8_t>(base.values.size(), 0), 0};
  const std::size_t hw = base.dims.positions();
  for (std::size_t i = 0; i < base.values.size(); ++i) {
    const std::int64_t o_msb = base.values[i];
    if (o_msb <= delta[i / hw]) {
      r.output.values[i] = o_msb * 2;
    } else {
      r.output.values[i] = o_msb * 2 + low.values[i];
      r.updated[i] = 1;
      ++r.updated_count;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Elementwise fixed-point references (exact rationals in Q16.16 units)

inline Rational bn_int_exact(std::int64_t x, std::int32_t scale, std::int32_t bias) {
  return {__int128{scale} * x + bias, 1};
}

inline Rational bn_fixed_exact(std::int64_t x, std::int32_t scale, std::int32_t bias) {
  return {__int128{scale} * x + __int128{bias} * kOne, kOne};
}

inline Rational bprelu_exact(std::int64_t x, std::int32_t alpha, std::int32_t beta,
                             std::int32_t gamma) {
  const __int128 z = __int128{x} - alpha;
  if (z >= 0) return {z + gamma, 1};
  return {z * beta + __int128{gamma} * kOne, kOne};
}

inline Rational mean_exact(std::span<const std::int64_t> v) {
  __int128 s = 0;
  for (auto x : v) s += x;
  return {s, static_cast<__int128>(v.size())};
}

// Level in {-3,-1,1,3} closest to x/s; on a tie the larger level wins.
inline int quantize_level(std::int64_t x, std::int32_t s) {
  int best = -3;
  __int128 best_dist = -1;
  for (int q : {-3, -1, 1, 3}) {
    __int128 d = __int128{x} - __int128{q} * s;
    if (d < 0) d = -d;
    if (best_dist < 0 || d <= best_dist) {
      best = q;
      best_dist = d;
    }
  }
  return best;
}

inline std::vector<std::int64_t> classifier(std::span<const std::int64_t> f,
                                            std::span<const std::int8_t> w,
                                            std::span<const std::int32_t> bias) {
  std::vector<std::int64_t> out(bias.size());
  for (std::size_t k = 0; k < bias.size(); ++k) {
    __int128 acc = bias[k];
    for (std::size_t i = 0; i < f.size(); ++i) acc += __int128{w[k * f.size() + i]} * f[i];
    out[k] = clamp_i32(acc);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Whole network

struct ForwardOutput {
  std::vector<std::int64_t> logits;
  std::size_t predicted = 0;
  std::size_t updated = 0;   // LSB updates over all fractional layers
  std::size_t outputs = 0;   // fractional output elements
};

// Same layer order as the packed executor, composed from the dense pieces
// above. If `layer_seconds` is given it receives one wall time per block.
inline ForwardOutput forward(const NetworkSpec& net, const Model& m, const Image& img,
                             std::vector<double>* layer_seconds = nullptr) {
  ForwardOutput result;
  if (layer_seconds) layer_seconds->clear();
  DenseTensor act;  // Q16.16 raw
  std::span<const std::int32_t> act_scale;
  std::vector<std::int64_t> pooled;
  std::size_t ci = 0;
  for (const auto& b : net.blocks) {
    const auto t0 = std::chrono::steady_clock::now();
    if (is_conv(b.kind)) {
      const ConvLayer& layer = m.convs.at(ci);
      if (layer.in_channels != b.in_channels || layer.out_channels != b.out_channels)
        throw ShapeError("oracle: layer " + b.name + " mismatch");
      std::vector<DenseTensor> w;
      for (const auto& plane : layer.weights) w.push_back(from_plane(plane));
      const std::size_t k = b.geometry.kernel, s = b.geometry.stride, pad = b.geometry.pad;
      DenseTensor conv;
      if (b.kind == BlockKind::input_layer) {
        conv = conv2d(encode_thermometer(img, net.resolution), w, k, s, pad);
      } else {
        DenseTensor q(act.dims);
        const std::size_t hw = act.dims.positions();
        for (std::size_t i = 0; i < act.values.size(); ++i)
          q.values[i] = quantize_level(act.values[i], act_scale[i / hw]);
        FracConvOutput fr = frac_conv(q, w, k, s, pad, layer.params.delta);
        result.updated += fr.updated_count;
        result.outputs += fr.output.values.size();
        conv = std::move(fr.output);
      }
      const auto& p = layer.params;
      const std::size_t hw = conv.dims.positions();
      DenseTensor y(conv.dims);
      for (std::size_t i = 0; i < conv.values.size(); ++i) {
        const std::size_t c = i / hw;
        const std::int64_t fixed = clamp_i32(__int128{conv.values[i]} * kOne);
        y.values[i] = to_q16(bprelu_exact(fixed, p.alpha[c], p.beta[c], p.gamma[c]));
      }
      if (b.has_shortcut) {
        DenseTensor sc = act;
        if (b.downsample) {
          DenseTensor pooled2(Dims{act.dims.channels * 2, act.dims.height / 2, act.dims.width / 2});
          for (std::size_t c = 0; c < pooled2.dims.channels; ++c)
            for (std::size_t h = 0; h < pooled2.dims.height; ++h)
              for (std::size_t w2 = 0; w2 < pooled2.dims.width; ++w2) {
                const std::size_t src = c % act.dims.channels;
                const std::int64_t vals[4] = {act.at(src, 2 * h, 2 * w2), act.at(src, 2 * h, 2 * w2 + 1),
                                              act.at(src, 2 * h + 1, 2 * w2),
                                              act.at(src, 2 * h + 1, 2 * w2 + 1)};
                pooled2.at(c, h, w2) = to_q16(mean_exact(vals));
              }
          sc = std::move(pooled2);
        }
        if (sc.dims != y.dims) throw ShapeError("oracle: shortcut shape at " + b.name);
        for (std::size_t i = 0; i < y.values.size(); ++i)
          y.values[i] = clamp_i32(__int128{y.values[i]} + sc.values[i]);
      }
      act = DenseTensor(y.dims);
      for (std::size_t i = 0; i < y.values.size(); ++i) {
        const std::size_t c = i / hw;
        act.values[i] = to_q16(bn_fixed_exact(y.values[i], p.bn_scale[c], p.bn_bias[c]));
      }
      act_scale = p.act_scale;
      ++ci;
    } else if (b.kind == BlockKind::pool) {
      const std::size_t hw = act.dims.positions();
      pooled.resize(act.dims.channels);
      for (std::size_t c = 0; c < act.dims.channels; ++c)
        pooled[c] = to_q16(mean_exact(std::span<const std::int64_t>(act.values).subspan(c * hw, hw)));
    } else if (b.kind == BlockKind::classifier) {
      result.logits = classifier(pooled, m.classifier.weights, m.classifier.bias);
      std::size_t best = 0;
      for (std::size_t k = 1; k < result.logits.size(); ++k)
        if (result.logits[k] > result.logits[best]) best = k;
      result.predicted = best;
    }
    if (layer_seconds)
      layer_seconds->push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return result;
}

}  // namespace fracbnn::oracle
