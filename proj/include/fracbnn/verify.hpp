#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fracbnn/kernels.hpp"
#include "fracbnn/model.hpp"
#include "fracbnn/oracle.hpp"
#include "fracbnn/synthetic.hpp"

// Randomized engine-vs-oracle equivalence checks shared by the CLI
// `verify` subcommand and the acceptance suite.
namespace fracbnn::verify {

struct CheckResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t failures = 0;
  std::string first_failure;

  bool passed() const { return failures == 0; }
  void fail(const std::string& why) {
    if (failures++ == 0) first_failure = why;
  }
};

struct Options {
  std::uint64_t seed = 1;
  std::size_t cases = 100;
  int threads = 1;
  // Perturbs one engine output per case; used as a negative control.
  bool inject_fault = false;
};

inline constexpr std::size_t kChannelSweep[] = {1, 63, 64, 65, 96, 128};

namespace detail {

struct Rng {
  explicit Rng(std::uint64_t seed) : engine(seed) {}
  std::mt19937_64 engine;
  std::size_t pick(std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(engine() % (hi - lo + 1));
  }
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(engine() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  bool coin() { return engine() & 1u; }
};

inline PackedBitPlane random_plane(Dims d, Rng& rng) {
  std::vector<std::int8_t> v(d.volume());
  for (auto& x : v) x = rng.coin() ? 1 : -1;
  return pack(v, d);
}

struct ConvCase {
  Dims in;
  ConvGeometry geo;
  std::size_t out_channels;
};

inline ConvCase random_conv_case(std::size_t i, Rng& rng) {
  ConvCase c;
  c.geo.kernel = (i / 6) % 2 ? 3 : 1;
  c.geo.stride = (i / 12) % 2 ? 2 : 1;
  c.geo.pad = c.geo.kernel == 3 ? rng.pick(0, 1) : 0;
  const std::size_t min_hw = c.geo.kernel > 2 * c.geo.pad ? c.geo.kernel - 2 * c.geo.pad : 1;
  c.in = {kChannelSweep[i % 6], rng.pick(std::max<std::size_t>(min_hw, 1), 7),
          rng.pick(std::max<std::size_t>(min_hw, 1), 7)};
  c.out_channels = rng.pick(1, 4);
  return c;
}

inline std::vector<oracle::DenseTensor> dense_weights(const std::vector<PackedBitPlane>& w) {
  std::vector<oracle::DenseTensor> out;
  for (const auto& p : w) out.push_back(oracle::from_plane(p));
  return out;
}

inline std::string describe(const ConvCase& c) {
  return "C=" + std::to_string(c.in.channels) + " HxW=" + std::to_string(c.in.height) + "x" +
         std::to_string(c.in.width) + " k=" + std::to_string(c.geo.kernel) +
         " s=" + std::to_string(c.geo.stride) + " p=" + std::to_string(c.geo.pad);
}

inline FixedFeatureMap random_fixed(Dims d, Rng& rng, std::int64_t magnitude) {
  FixedFeatureMap m(d);
  for (auto& v : m.values) v = static_cast<std::int32_t>(rng.range(-magnitude, magnitude));
  return m;
}

}  // namespace detail

inline CheckResult check_binary_conv(const Options& opt) {
  CheckResult r;
  r.name = "binary_conv2d";
  detail::Rng rng(opt.seed * 1000003 + 1);
  for (std::size_t i = 0; i < opt.cases; ++i, ++r.cases) {
    const auto cc = detail::random_conv_case(i, rng);
    const auto x = detail::random_plane(cc.in, rng);
    std::vector<PackedBitPlane> w;
    for (std::size_t o = 0; o < cc.out_channels; ++o)
      w.push_back(detail::random_plane({cc.in.channels, cc.geo.kernel, cc.geo.kernel}, rng));
    IntFeatureMap got = binary_conv2d(x, w, cc.geo, {opt.threads});
    if (opt.inject_fault) got.values[0] += 2;
    const auto want = oracle::conv2d(oracle::from_plane(x), detail::dense_weights(w),
                                     cc.geo.kernel, cc.geo.stride, cc.geo.pad);
    bool ok = got.dims == want.dims;
    for (std::size_t j = 0; ok && j < want.values.size(); ++j) ok = got.values[j] == want.values[j];
    if (!ok) r.fail("case " + std::to_string(i) + " " + detail::describe(cc));
  }
  return r;
}

// Frac conv with thresholds drawn from the base-value range, plus the two
// sentinel degeneracies on every third case.
inline CheckResult check_frac_conv(const Options& opt) {
  CheckResult r;
  r.name = "frac_conv2d";
  detail::Rng rng(opt.seed * 1000003 + 2);
  for (std::size_t i = 0; i < opt.cases; ++i, ++r.cases) {
    const auto cc = detail::random_conv_case(i, rng);
    const FracActivation x(detail::random_plane(cc.in, rng), detail::random_plane(cc.in, rng));
    std::vector<PackedBitPlane> w;
    for (std::size_t o = 0; o < cc.out_channels; ++o)
      w.push_back(detail::random_plane({cc.in.channels, cc.geo.kernel, cc.geo.kernel}, rng));
    const auto window = static_cast<std::int64_t>(cc.in.channels * cc.geo.kernel * cc.geo.kernel);
    std::vector<std::int32_t> delta(cc.out_channels);
    for (auto& d : delta) {
      switch (i % 3) {
        case 0: d = static_cast<std::int32_t>(rng.range(-window / 4, window / 4)); break;
        case 1: d = kGateAlwaysOpen; break;
        default: d = kGateAlwaysClosed; break;
      }
    }
    FracConvResult got = frac_conv2d(x, w, cc.geo, delta, {opt.threads});
    if (opt.inject_fault) got.output.values[0] += 1;

    oracle::DenseTensor x2(cc.in);
    for (std::size_t c = 0; c < cc.in.channels; ++c)
      for (std::size_t h = 0; h < cc.in.height; ++h)
        for (std::size_t ww = 0; ww < cc.in.width; ++ww) x2.at(c, h, ww) = x.value(c, h, ww);
    const auto want = oracle::frac_conv(x2, detail::dense_weights(w), cc.geo.kernel,
                                        cc.geo.stride, cc.geo.pad, delta);
    bool ok = got.output.dims == want.output.dims && got.update_mask == want.updated &&
              got.updated == want.updated_count;
    for (std::size_t j = 0; ok && j < want.output.values.size(); ++j)
      ok = got.output.values[j] == want.output.values[j];
    if (i % 3 == 1) ok = ok && got.sparsity() == 0.0;
    if (i % 3 == 2) ok = ok && got.sparsity() == 1.0;
    if (!ok) r.fail("case " + std::to_string(i) + " " + detail::describe(cc));
  }
  return r;
}

inline CheckResult check_quantize(const Options& opt) {
  CheckResult r;
  r.name = "quantize2bit";
  detail::Rng rng(opt.seed * 1000003 + 3);
  for (std::size_t i = 0; i < opt.cases; ++i, ++r.cases) {
    const Dims d{kChannelSweep[i % 6], rng.pick(1, 5), rng.pick(1, 5)};
    std::vector<std::int32_t> s(d.channels);
    for (auto& v : s) v = static_cast<std::int32_t>(rng.range(1, 4 * q16::kOne));
    FixedFeatureMap x = detail::random_fixed(d, rng, 16 * q16::kOne);
    // Land some values exactly on the decision boundaries.
    for (std::size_t j = 0; j < x.values.size(); j += 3) {
      const std::int64_t mult = rng.range(-3, 3);
      x.values[j] = static_cast<std::int32_t>(mult * s[j / d.positions()]);
    }
    const FracActivation q = quantize2bit(x, s);
    bool ok = true;
    for (std::size_t c = 0; ok && c < d.channels; ++c)
      for (std::size_t h = 0; ok && h < d.height; ++h)
        for (std::size_t w = 0; ok && w < d.width; ++w) {
          int got = q.value(c, h, w);
          if (opt.inject_fault && c == 0 && h == 0 && w == 0) got = -got;
          ok = got == oracle::quantize_level(x.at(c, h, w), s[c]);
        }
    if (!ok) r.fail("case " + std::to_string(i));
  }
  return r;
}

inline CheckResult check_batchnorm(const Options& opt) {
  CheckResult r;
  r.name = "batchnorm_apply";
  detail::Rng rng(opt.seed * 1000003 + 4);
  for (std::size_t i = 0; i < opt.cases; ++i, ++r.cases) {
    const Dims d{kChannelSweep[i % 6], rng.pick(1, 4), rng.pick(1, 4)};
    std::vector<std::int32_t> scale(d.channels), bias(d.channels);
    for (auto& v : scale) v = static_cast<std::int32_t>(rng.range(-8 * q16::kOne, 8 * q16::kOne));
    for (auto& v : bias) v = static_cast<std::int32_t>(rng.range(-8 * q16::kOne, 8 * q16::kOne));
    const bool integer_input = i % 2 == 0;
    bool ok = true;
    const std::size_t hw = d.positions();
    if (integer_input) {
      IntFeatureMap x(d);
      for (auto& v : x.values) v = static_cast<std::int32_t>(rng.range(-2000, 2000));
      FixedFeatureMap y = batchnorm_apply(x, scale, bias);
      if (opt.inject_fault) y.values[0] += 2;
      for (std::size_t j = 0; ok && j < x.values.size(); ++j)
        ok = oracle::within_one_ulp(y.values[j],
                                    oracle::bn_int_exact(x.values[j], scale[j / hw], bias[j / hw]));
    } else {
      const FixedFeatureMap x = detail::random_fixed(d, rng, 64 * q16::kOne);
      FixedFeatureMap y = batchnorm_apply(x, scale, bias);
      if (opt.inject_fault) y.values[0] += 2;
      for (std::size_t j = 0; ok && j < x.values.size(); ++j)
        ok = oracle::within_one_ulp(
            y.values[j], oracle::bn_fixed_exact(x.values[j], scale[j / hw], bias[j / hw]));
    }
    if (!ok) r.fail("case " + std::to_string(i));
  }
  return r;
}

inline CheckResult check_bprelu(const Options& opt) {
  CheckResult r;
  r.name = "bprelu";
  detail::Rng rng(opt.seed * 1000003 + 5);
  for (std::size_t i = 0; i < opt.cases; ++i, ++r.cases) {
    const Dims d{kChannelSweep[i % 6], rng.pick(1, 4), rng.pick(1, 4)};
    std::vector<std::int32_t> a(d.channels), b(d.channels), g(d.channels);
    for (auto& v : a) v = static_cast<std::int32_t>(rng.range(-4 * q16::kOne, 4 * q16::kOne));
    for (auto& v : b) v = static_cast<std::int32_t>(rng.range(-q16::kOne, 2 * q16::kOne));
    for (auto& v : g) v = static_cast<std::int32_t>(rng.range(-4 * q16::kOne, 4 * q16::kOne));
    const FixedFeatureMap x = detail::random_fixed(d, rng, 64 * q16::kOne);
    FixedFeatureMap y = bprelu(x, a, b, g);
    if (opt.inject_fault) y.values[0] += 2;
    const std::size_t hw = d.positions();
    bool ok = true;
    for (std::size_t j = 0; ok && j < x.values.size(); ++j) {
      const std::size_t c = j / hw;
      ok = oracle::within_one_ulp(y.values[j], oracle::bprelu_exact(x.values[j], a[c], b[c], g[c]));
    }
    if (!ok) r.fail("case " + std::to_string(i));
  }
  return r;
}

inline CheckResult check_avgpool(const Options& opt) {
  CheckResult r;
  r.name = "avgpool2d";
  detail::Rng rng(opt.seed * 1000003 + 6);
  for (std::size_t i = 0; i < opt.cases; ++i, ++r.cases) {
    const Dims d{kChannelSweep[i % 6], 2 * rng.pick(1, 4), 2 * rng.pick(1, 4)};
    const FixedFeatureMap x = detail::random_fixed(d, rng, 1000 * q16::kOne);
    FixedFeatureMap y = avgpool2d(x);
    std::vector<std::int32_t> g = global_avgpool(x);
    if (opt.inject_fault) y.values[0] += 2;
    bool ok = y.dims == Dims{d.channels, d.height / 2, d.width / 2};
    for (std::size_t c = 0; ok && c < d.channels; ++c) {
      for (std::size_t h = 0; ok && h < y.dims.height; ++h)
        for (std::size_t w = 0; ok && w < y.dims.width; ++w) {
          const std::int64_t v[4] = {x.at(c, 2 * h, 2 * w), x.at(c, 2 * h, 2 * w + 1),
                                     x.at(c, 2 * h + 1, 2 * w), x.at(c, 2 * h + 1, 2 * w + 1)};
          ok = oracle::within_one_ulp(y.at(c, h, w), oracle::mean_exact(v));
        }
      std::vector<std::int64_t> all(x.values.begin() + static_cast<std::ptrdiff_t>(c * d.positions()),
                                    x.values.begin() + static_cast<std::ptrdiff_t>((c + 1) * d.positions()));
      ok = ok && oracle::within_one_ulp(g[c], oracle::mean_exact(all));
    }
    if (!ok) r.fail("case " + std::to_string(i));
  }
  return r;
}

inline CheckResult check_classifier(const Options& opt) {
  CheckResult r;
  r.name = "linear_classifier";
  detail::Rng rng(opt.seed * 1000003 + 7);
  for (std::size_t i = 0; i < opt.cases; ++i, ++r.cases) {
    const std::size_t n = kChannelSweep[i % 6], k = rng.pick(1, 12);
    std::vector<std::int32_t> f(n), bias(k);
    std::vector<std::int8_t> w(n * k);
    // Every 10th case uses magnitudes large enough to saturate.
    const std::int64_t mag = i % 10 == 9 ? std::int64_t{1} << 30 : std::int64_t{1} << 20;
    for (auto& v : f) v = static_cast<std::int32_t>(rng.range(-mag, mag));
    for (auto& v : w) v = static_cast<std::int8_t>(rng.range(-128, 127));
    for (auto& v : bias) v = static_cast<std::int32_t>(rng.range(-mag, mag));
    std::vector<std::int32_t> got = linear_classifier(f, w, bias);
    if (opt.inject_fault) got[0] ^= 1;
    const std::vector<std::int64_t> f64(f.begin(), f.end());
    const auto want = oracle::classifier(f64, w, bias);
    bool ok = got.size() == want.size();
    for (std::size_t j = 0; ok && j < want.size(); ++j) ok = got[j] == want[j];
    if (!ok) r.fail("case " + std::to_string(i));
  }
  return r;
}

// Whole-network logits, packed engine vs dense oracle, on synthetic models.
inline CheckResult check_end_to_end(const Options& opt, std::size_t models, std::size_t images) {
  CheckResult r;
  r.name = "end_to_end";
  for (std::size_t mi = 0; mi < models; ++mi) {
    const Model m = generate_synthetic(opt.seed * 7919 + mi);
    const NetworkSpec net = network_for(m);
    for (std::size_t ii = 0; ii < images; ++ii, ++r.cases) {
      const std::uint64_t s = opt.seed * 104729 + mi * 131 + ii;
      const Image img = ii % 2 ? smooth_image(32, 32, s) : random_image(32, 32, s);
      ForwardResult got = forward(net, m, img, {opt.threads});
      if (opt.inject_fault) got.logits[0] += 1;
      const auto want = oracle::forward(net, m, img);
      bool ok = got.logits.size() == want.logits.size() && got.predicted == want.predicted;
      for (std::size_t j = 0; ok && j < want.logits.size(); ++j) ok = got.logits[j] == want.logits[j];
      if (!ok) r.fail("model " + std::to_string(mi) + " image " + std::to_string(ii));
    }
  }
  return r;
}

inline std::vector<CheckResult> run_kernel_checks(const Options& opt) {
  return {check_binary_conv(opt), check_frac_conv(opt), check_quantize(opt),
          check_batchnorm(opt),   check_bprelu(opt),    check_avgpool(opt),
          check_classifier(opt)};
}

}  // namespace fracbnn::verify
