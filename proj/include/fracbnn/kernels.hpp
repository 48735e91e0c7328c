#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fracbnn/bitpack.hpp"
#include "fracbnn/fixed.hpp"
#include "fracbnn/parallel.hpp"
#include "fracbnn/tensor.hpp"

namespace fracbnn {

// Gate sentinels for the fractional threshold.
inline constexpr std::int32_t kGateAlwaysOpen = std::numeric_limits<std::int32_t>::min();
inline constexpr std::int32_t kGateAlwaysClosed = std::numeric_limits<std::int32_t>::max();

// 2-bit activation x = 2*msb + lsb, x in {-3,-1,+1,+3}.
class FracActivation {
 public:
  FracActivation() = default;
  FracActivation(PackedBitPlane msb, PackedBitPlane lsb)
      : msb_(std::move(msb)), lsb_(std::move(lsb)) {
    if (msb_.dims() != lsb_.dims())
      throw ShapeError("msb/lsb dims differ: " + to_string(msb_.dims()) + " vs " +
                       to_string(lsb_.dims()));
  }
  const PackedBitPlane& msb() const { return msb_; }
  const PackedBitPlane& lsb() const { return lsb_; }
  const Dims& dims() const { return msb_.dims(); }

  int value(std::size_t c, std::size_t h, std::size_t w) const {
    return 2 * msb_.value(c, h, w) + lsb_.value(c, h, w);
  }

 private:
  PackedBitPlane msb_;
  PackedBitPlane lsb_;
};

// Per-output-channel parameters of a conv layer, struct-of-arrays.
// Real-valued entries are Q16.16 raw; delta is in the signed-dot domain.
struct ChannelParams {
  std::vector<std::int32_t> delta;
  std::vector<std::int32_t> bn_scale;
  std::vector<std::int32_t> bn_bias;
  std::vector<std::int32_t> alpha;
  std::vector<std::int32_t> beta;  // PReLU negative slope
  std::vector<std::int32_t> gamma;
  std::vector<std::int32_t> act_scale;  // 2-bit quantizer step for consumers

  explicit ChannelParams(std::size_t channels = 0)
      : delta(channels, kGateAlwaysClosed),
        bn_scale(channels, q16::kOne),
        bn_bias(channels, 0),
        alpha(channels, 0),
        beta(channels, q16::kOne),
        gamma(channels, 0),
        act_scale(channels, q16::kOne) {}

  std::size_t channels() const { return delta.size(); }

  // Throws if any array length differs from `channels` or act_scale <= 0.
  void validate(std::size_t channels) const {
    for (const auto* v : {&delta, &bn_scale, &bn_bias, &alpha, &beta, &gamma, &act_scale})
      if (v->size() != channels)
        throw ShapeError("channel params hold " + std::to_string(v->size()) +
                         " entries, expected " + std::to_string(channels));
    for (std::size_t c = 0; c < channels; ++c)
      if (act_scale[c] <= 0)
        throw std::invalid_argument("act_scale[" + std::to_string(c) + "] must be positive");
  }

  friend bool operator==(const ChannelParams&, const ChannelParams&) = default;
};

struct ConvGeometry {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;

  void validate() const {
    if (kernel != 1 && kernel != 3)
      throw ShapeError("kernel must be 1 or 3, got " + std::to_string(kernel));
    if (stride != 1 && stride != 2)
      throw ShapeError("stride must be 1 or 2, got " + std::to_string(stride));
    if (pad > 1 || (pad == 1 && kernel != 3))
      throw ShapeError("padding 1 is only valid with 3x3 kernels");
  }

  Dims output_dims(const Dims& in, std::size_t out_channels) const {
    if (in.height + 2 * pad < kernel || in.width + 2 * pad < kernel)
      throw ShapeError("input " + to_string(in) + " smaller than kernel");
    return {out_channels, (in.height + 2 * pad - kernel) / stride + 1,
            (in.width + 2 * pad - kernel) / stride + 1};
  }

  friend bool operator==(const ConvGeometry&, const ConvGeometry&) = default;
};

namespace detail {

inline void check_conv_operands(const Dims& in, std::span<const PackedBitPlane> weights,
                                const ConvGeometry& geo) {
  geo.validate();
  if (weights.empty()) throw ShapeError("convolution needs at least one output channel");
  for (std::size_t o = 0; o < weights.size(); ++o) {
    const Dims& wd = weights[o].dims();
    if (wd.channels != in.channels || wd.height != geo.kernel || wd.width != geo.kernel)
      throw ShapeError("weight " + std::to_string(o) + " has dims " + to_string(wd) +
                       ", expected " + std::to_string(in.channels) + "x" +
                       std::to_string(geo.kernel) + "x" + std::to_string(geo.kernel));
  }
}

// Sum of channel dot products over the unpadded taps of one output position.
inline std::int32_t conv_at(const PackedBitPlane& x, const PackedBitPlane& w,
                            const ConvGeometry& geo, std::size_t oh, std::size_t ow) {
  const std::size_t nw = x.words_per_position();
  const std::ptrdiff_t k = static_cast<std::ptrdiff_t>(geo.kernel);
  const std::ptrdiff_t ih0 = static_cast<std::ptrdiff_t>(oh * geo.stride) -
                             static_cast<std::ptrdiff_t>(geo.pad);
  const std::ptrdiff_t iw0 = static_cast<std::ptrdiff_t>(ow * geo.stride) -
                             static_cast<std::ptrdiff_t>(geo.pad);
  const std::ptrdiff_t kh0 = std::max<std::ptrdiff_t>(0, -ih0);
  const std::ptrdiff_t kh1 = std::min<std::ptrdiff_t>(k, static_cast<std::ptrdiff_t>(x.height()) - ih0);
  const std::ptrdiff_t kw0 = std::max<std::ptrdiff_t>(0, -iw0);
  const std::ptrdiff_t kw1 = std::min<std::ptrdiff_t>(k, static_cast<std::ptrdiff_t>(x.width()) - iw0);
  if (kh0 >= kh1 || kw0 >= kw1) return 0;
  const std::uint64_t* xs = x.words().data();
  const std::uint64_t* ws = w.words().data();
  const std::size_t row = x.width() * nw;
  const std::size_t run = static_cast<std::size_t>(kw1 - kw0) * nw;
  int mismatches = 0;
  for (std::ptrdiff_t kh = kh0; kh < kh1; ++kh) {
    // Taps kw0..kw1 are contiguous in both planes.
    const std::uint64_t* xp = xs + static_cast<std::size_t>(ih0 + kh) * row +
                              static_cast<std::size_t>(iw0 + kw0) * nw;
    const std::uint64_t* wp = ws + static_cast<std::size_t>(kh * k + kw0) * nw;
    for (std::size_t i = 0; i < run; ++i) mismatches += std::popcount(xp[i] ^ wp[i]);
  }
  const std::int32_t taps = static_cast<std::int32_t>((kh1 - kh0) * (kw1 - kw0));
  return taps * static_cast<std::int32_t>(x.channels()) - 2 * mismatches;
}

}  // namespace detail

// XNOR/popcount convolution. Padded taps contribute nothing.
inline IntFeatureMap binary_conv2d(const PackedBitPlane& x, std::span<const PackedBitPlane> weights,
                                   const ConvGeometry& geo, const ExecContext& ctx = {}) {
  detail::check_conv_operands(x.dims(), weights, geo);
  IntFeatureMap out(geo.output_dims(x.dims(), weights.size()));
  const std::size_t oh_n = out.dims.height, ow_n = out.dims.width;
  parallel_for(weights.size(), ctx.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t o = begin; o < end; ++o)
      for (std::size_t oh = 0; oh < oh_n; ++oh)
        for (std::size_t ow = 0; ow < ow_n; ++ow)
          out.at(o, oh, ow) = detail::conv_at(x, weights[o], geo, oh, ow);
  });
  return out;
}

struct FracConvResult {
  IntFeatureMap output;
  std::vector<std::uint8_t> update_mask;  // 1 where the LSB update ran, CHW
  std::uint64_t updated = 0;
  // Fraction of output elements whose LSB update was skipped.
  double sparsity() const {
    return update_mask.empty()
               ? 0.0
               : 1.0 - static_cast<double>(updated) / static_cast<double>(update_mask.size());
  }
};

// Two-phase fractional convolution. The base pass convolves the MSB plane;
// outputs whose fully accumulated base exceeds delta[c] get the LSB pass
// added: out = (base << 1) + lsb_dot, otherwise out = base << 1.
inline FracConvResult frac_conv2d(const FracActivation& x, std::span<const PackedBitPlane> weights,
                                  const ConvGeometry& geo, std::span<const std::int32_t> delta,
                                  const ExecContext& ctx = {}) {
  if (delta.size() != weights.size())
    throw ShapeError("delta has " + std::to_string(delta.size()) + " entries for " +
                     std::to_string(weights.size()) + " output channels");
  FracConvResult r{binary_conv2d(x.msb(), weights, geo, ctx), {}, 0};
  IntFeatureMap& out = r.output;
  r.update_mask.assign(out.values.size(), 0);
  const std::size_t oh_n = out.dims.height, ow_n = out.dims.width;
  std::vector<std::uint64_t> per_channel(weights.size(), 0);
  parallel_for(weights.size(), ctx.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t o = begin; o < end; ++o) {
      for (std::size_t oh = 0; oh < oh_n; ++oh) {
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          const std::size_t idx = (o * oh_n + oh) * ow_n + ow;
          const std::int32_t base = out.values[idx];
          std::int32_t v = base * 2;
          if (base > delta[o]) {
            v += detail::conv_at(x.lsb(), weights[o], geo, oh, ow);
            r.update_mask[idx] = 1;
            ++per_channel[o];
          }
          out.values[idx] = v;
        }
      }
    }
  });
  for (auto n : per_channel) r.updated += n;
  return r;
}

// Nearest level of {-3,-1,+1,+3} to x/s, ties toward the more positive level.
inline FracActivation quantize2bit(const FixedFeatureMap& x, std::span<const std::int32_t> scale) {
  if (scale.size() != x.dims.channels)
    throw ShapeError("quantizer scale has " + std::to_string(scale.size()) +
                     " entries for " + std::to_string(x.dims.channels) + " channels");
  PackedBitPlane msb(x.dims), lsb(x.dims);
  for (std::size_t c = 0; c < x.dims.channels; ++c) {
    if (scale[c] <= 0) throw std::invalid_argument("quantizer scale must be positive");
    const std::int64_t two_s = 2 * std::int64_t{scale[c]};
    for (std::size_t h = 0; h < x.dims.height; ++h)
      for (std::size_t w = 0; w < x.dims.width; ++w) {
        const std::int64_t v = x.at(c, h, w);
        // +3 -> (+,+), +1 -> (+,-), -1 -> (-,+), -3 -> (-,-)
        const bool m = v >= 0;
        const bool l = m ? v >= two_s : v >= -two_s;
        if (m) msb.set(c, h, w, true);
        if (l) lsb.set(c, h, w, true);
      }
  }
  return {std::move(msb), std::move(lsb)};
}

// sign(x) with sign(0) = +1.
inline PackedBitPlane sign_binarize(const FixedFeatureMap& x) {
  PackedBitPlane out(x.dims);
  for (std::size_t c = 0; c < x.dims.channels; ++c)
    for (std::size_t h = 0; h < x.dims.height; ++h)
      for (std::size_t w = 0; w < x.dims.width; ++w)
        if (x.at(c, h, w) >= 0) out.set(c, h, w, true);
  return out;
}

inline FixedFeatureMap to_fixed(const IntFeatureMap& x, const ExecContext& ctx = {}) {
  FixedFeatureMap out(x.dims);
  for (std::size_t i = 0; i < x.values.size(); ++i)
    out.values[i] = q16::from_int(x.values[i], ctx.diagnostics);
  return out;
}

namespace detail {
inline void check_per_channel(std::size_t n, std::size_t channels, const char* what) {
  if (n != channels)
    throw ShapeError(std::string(what) + " has " + std::to_string(n) + " entries for " +
                     std::to_string(channels) + " channels");
}
}  // namespace detail

// y = scale*x + bias with integer x; the product is exact in Q16.16.
inline FixedFeatureMap batchnorm_apply(const IntFeatureMap& x, std::span<const std::int32_t> scale,
                                       std::span<const std::int32_t> bias,
                                       const ExecContext& ctx = {}) {
  detail::check_per_channel(scale.size(), x.dims.channels, "bn_scale");
  detail::check_per_channel(bias.size(), x.dims.channels, "bn_bias");
  FixedFeatureMap out(x.dims);
  const std::size_t hw = x.dims.positions();
  for (std::size_t c = 0; c < x.dims.channels; ++c)
    for (std::size_t p = 0; p < hw; ++p) {
      const std::size_t i = c * hw + p;
      out.values[i] =
          q16::saturate(std::int64_t{scale[c]} * x.values[i] + bias[c], ctx.diagnostics);
    }
  return out;
}

// y = scale*x + bias in Q16.16, product rounded to nearest even.
inline FixedFeatureMap batchnorm_apply(const FixedFeatureMap& x,
                                       std::span<const std::int32_t> scale,
                                       std::span<const std::int32_t> bias,
                                       const ExecContext& ctx = {}) {
  detail::check_per_channel(scale.size(), x.dims.channels, "bn_scale");
  detail::check_per_channel(bias.size(), x.dims.channels, "bn_bias");
  FixedFeatureMap out(x.dims);
  const std::size_t hw = x.dims.positions();
  for (std::size_t c = 0; c < x.dims.channels; ++c)
    for (std::size_t p = 0; p < hw; ++p) {
      const std::size_t i = c * hw + p;
      const std::int64_t prod =
          q16::shift_round_even(std::int64_t{scale[c]} * x.values[i], q16::kFracBits);
      out.values[i] = q16::saturate(prod + bias[c], ctx.diagnostics);
    }
  return out;
}

// Biased PReLU: y = PReLU(x - alpha) + gamma, slope beta below the origin.
inline FixedFeatureMap bprelu(const FixedFeatureMap& x, std::span<const std::int32_t> alpha,
                              std::span<const std::int32_t> beta,
                              std::span<const std::int32_t> gamma, const ExecContext& ctx = {}) {
  detail::check_per_channel(alpha.size(), x.dims.channels, "alpha");
  detail::check_per_channel(beta.size(), x.dims.channels, "beta");
  detail::check_per_channel(gamma.size(), x.dims.channels, "gamma");
  FixedFeatureMap out(x.dims);
  const std::size_t hw = x.dims.positions();
  for (std::size_t c = 0; c < x.dims.channels; ++c)
    for (std::size_t p = 0; p < hw; ++p) {
      const std::size_t i = c * hw + p;
      std::int64_t z = std::int64_t{x.values[i]} - alpha[c];
      if (z < 0) z = q16::shift_round_even(z * beta[c], q16::kFracBits);
      out.values[i] = q16::saturate(z + gamma[c], ctx.diagnostics);
    }
  return out;
}

// Non-overlapping k x k mean pooling (stride == k).
inline FixedFeatureMap avgpool2d(const FixedFeatureMap& x, std::size_t k = 2,
                                 std::size_t stride = 2) {
  if (k == 0 || stride != k)
    throw ShapeError("avgpool2d supports only non-overlapping windows (stride == k)");
  if (x.dims.height % k || x.dims.width % k)
    throw ShapeError("avgpool2d: " + to_string(x.dims) + " not divisible by " +
                     std::to_string(k));
  FixedFeatureMap out(Dims{x.dims.channels, x.dims.height / k, x.dims.width / k});
  const auto area = static_cast<std::int64_t>(k * k);
  for (std::size_t c = 0; c < x.dims.channels; ++c)
    for (std::size_t oh = 0; oh < out.dims.height; ++oh)
      for (std::size_t ow = 0; ow < out.dims.width; ++ow) {
        std::int64_t sum = 0;
        for (std::size_t dh = 0; dh < k; ++dh)
          for (std::size_t dw = 0; dw < k; ++dw) sum += x.at(c, oh * k + dh, ow * k + dw);
        out.at(c, oh, ow) = static_cast<std::int32_t>(q16::div_round_even(sum, area));
      }
  return out;
}

// Per-channel spatial mean (Q16.16).
inline std::vector<std::int32_t> global_avgpool(const FixedFeatureMap& x) {
  const std::size_t hw = x.dims.positions();
  if (hw == 0) throw ShapeError("global_avgpool on empty map");
  std::vector<std::int32_t> out(x.dims.channels);
  for (std::size_t c = 0; c < x.dims.channels; ++c) {
    std::int64_t sum = 0;
    for (std::size_t p = 0; p < hw; ++p) sum += x.values[c * hw + p];
    out[c] = static_cast<std::int32_t>(q16::div_round_even(sum, static_cast<std::int64_t>(hw)));
  }
  return out;
}

// Channels repeated twice: [original | copy].
inline FixedFeatureMap channel_duplicate(const FixedFeatureMap& x) {
  FixedFeatureMap out(Dims{2 * x.dims.channels, x.dims.height, x.dims.width});
  std::copy(x.values.begin(), x.values.end(), out.values.begin());
  std::copy(x.values.begin(), x.values.end(), out.values.begin() + static_cast<std::ptrdiff_t>(x.values.size()));
  return out;
}

inline FixedFeatureMap shortcut_add(const FixedFeatureMap& a, const FixedFeatureMap& b,
                                    const ExecContext& ctx = {}) {
  if (a.dims != b.dims)
    throw ShapeError("shortcut_add: " + to_string(a.dims) + " vs " + to_string(b.dims));
  FixedFeatureMap out(a.dims);
  for (std::size_t i = 0; i < a.values.size(); ++i)
    out.values[i] = q16::add(a.values[i], b.values[i], ctx.diagnostics);
  return out;
}

// logits = W*f + bias. W is row-major (classes x features). Accumulates in
// 64 bits and saturates each logit to int32.
inline std::vector<std::int32_t> linear_classifier(std::span<const std::int32_t> features,
                                                   std::span<const std::int8_t> weights,
                                                   std::span<const std::int32_t> bias,
                                                   const ExecContext& ctx = {}) {
  if (bias.empty() || weights.size() != bias.size() * features.size())
    throw ShapeError("classifier: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(bias.size()) + " classes x " +
                     std::to_string(features.size()) + " features");
  std::vector<std::int32_t> logits(bias.size());
  for (std::size_t k = 0; k < bias.size(); ++k) {
    std::int64_t acc = bias[k];
    for (std::size_t i = 0; i < features.size(); ++i)
      acc += std::int64_t{weights[k * features.size() + i]} * features[i];
    logits[k] = q16::saturate(acc, ctx.diagnostics);
  }
  return logits;
}

// Index of the first maximum.
inline std::size_t argmax(std::span<const std::int32_t> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace fracbnn
