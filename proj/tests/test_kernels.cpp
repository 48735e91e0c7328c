#include <gtest/gtest.h>

#include <random>

#include "fracbnn/kernels.hpp"
#include "fracbnn/oracle.hpp"
#include "fracbnn/verify.hpp"

using namespace fracbnn;

namespace {

PackedBitPlane constant_plane(Dims d, bool plus) {
  return pack(std::vector<std::int8_t>(d.volume(), plus ? 1 : -1), d);
}

PackedBitPlane random_plane(Dims d, std::mt19937_64& rng) {
  std::vector<std::int8_t> v(d.volume());
  for (auto& x : v) x = (rng() & 1) ? 1 : -1;
  return pack(v, d);
}

FracActivation random_activation(Dims d, std::mt19937_64& rng) {
  return {random_plane(d, rng), random_plane(d, rng)};
}

std::vector<PackedBitPlane> random_weights(std::size_t out, std::size_t c, std::size_t k,
                                           std::mt19937_64& rng) {
  std::vector<PackedBitPlane> w;
  for (std::size_t o = 0; o < out; ++o) w.push_back(random_plane(Dims{c, k, k}, rng));
  return w;
}

FixedFeatureMap map_of(Dims d, std::vector<std::int32_t> v) { return {d, std::move(v)}; }

verify::Options small_options() {
  verify::Options o;
  o.cases = 48;
  o.seed = 11;
  return o;
}

}  // namespace

TEST(BinaryConv, PaddedTapsContributeNothing) {
  const auto x = constant_plane(Dims{1, 1, 1}, true);
  const std::vector<PackedBitPlane> w{constant_plane(Dims{1, 3, 3}, true)};
  const IntFeatureMap out = binary_conv2d(x, w, ConvGeometry{3, 1, 1});
  EXPECT_EQ(out.values, std::vector<std::int32_t>{1});
}

TEST(BinaryConv, TapCounting) {
  const auto x = constant_plane(Dims{1, 5, 5}, true);
  const std::vector<PackedBitPlane> w{constant_plane(Dims{1, 3, 3}, true)};
  const IntFeatureMap out = binary_conv2d(x, w, ConvGeometry{3, 1, 1});
  EXPECT_EQ(out.at(0, 0, 0), 4);
  EXPECT_EQ(out.at(0, 0, 2), 6);
  EXPECT_EQ(out.at(0, 2, 2), 9);
}

TEST(BinaryConv, SelfCorrelation) {
  std::mt19937_64 rng(5);
  for (std::size_t c : {1u, 63u, 64u, 65u, 96u}) {
    const PackedBitPlane tap = random_plane(Dims{c, 1, 1}, rng);
    PackedBitPlane x(Dims{c, 6, 6}), w(Dims{c, 3, 3});
    for (std::size_t h = 0; h < 6; ++h)
      for (std::size_t ww = 0; ww < 6; ++ww)
        for (std::size_t ch = 0; ch < c; ++ch) {
          x.set(ch, h, ww, tap.bit(ch, 0, 0));
          if (h < 3 && ww < 3) w.set(ch, h, ww, tap.bit(ch, 0, 0));
        }
    const IntFeatureMap out = binary_conv2d(x, std::vector<PackedBitPlane>{w}, ConvGeometry{3, 1, 0});
    for (auto v : out.values) EXPECT_EQ(v, static_cast<std::int32_t>(9 * c));
  }
}

TEST(BinaryConv, StridedC96MatchesOracle) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 25; ++i) {
    const PackedBitPlane x = random_plane(Dims{96, 8, 8}, rng);
    const auto w = random_weights(4, 96, 3, rng);
    const IntFeatureMap out = binary_conv2d(x, w, ConvGeometry{3, 2, 1});
    std::vector<oracle::DenseTensor> dw;
    for (const auto& p : w) dw.push_back(oracle::from_plane(p));
    const auto ref = oracle::conv2d(oracle::from_plane(x), dw, 3, 2, 1);
    ASSERT_EQ(out.dims, ref.dims);
    for (std::size_t j = 0; j < ref.values.size(); ++j) EXPECT_EQ(out.values[j], ref.values[j]);
  }
}

TEST(BinaryConv, RejectsBadShapes) {
  std::mt19937_64 rng(7);
  const PackedBitPlane x = random_plane(Dims{8, 4, 4}, rng);
  EXPECT_THROW(binary_conv2d(x, random_weights(2, 9, 3, rng), ConvGeometry{3, 1, 1}), ShapeError);
  EXPECT_THROW(binary_conv2d(x, random_weights(2, 8, 3, rng), ConvGeometry{5, 1, 1}), ShapeError);
  EXPECT_THROW(binary_conv2d(x, random_weights(2, 8, 1, rng), ConvGeometry{1, 1, 1}), ShapeError);
  EXPECT_THROW(binary_conv2d(x, {}, ConvGeometry{3, 1, 1}), ShapeError);
}

TEST(FracConv, ClosedGatesGiveDoubledBase) {
  std::mt19937_64 rng(8);
  for (std::size_t c : verify::kChannelSweep) {
    const FracActivation x = random_activation(Dims{c, 5, 5}, rng);
    const auto w = random_weights(3, c, 3, rng);
    const std::vector<std::int32_t> delta(3, kGateAlwaysClosed);
    const FracConvResult r = frac_conv2d(x, w, ConvGeometry{3, 1, 1}, delta);
    const IntFeatureMap base = binary_conv2d(x.msb(), w, ConvGeometry{3, 1, 1});
    for (std::size_t i = 0; i < base.values.size(); ++i) EXPECT_EQ(r.output.values[i], 2 * base.values[i]);
    EXPECT_EQ(r.updated, 0u);
    EXPECT_DOUBLE_EQ(r.sparsity(), 1.0);
  }
}

TEST(FracConv, OpenGatesGiveDense2BitConv) {
  std::mt19937_64 rng(9);
  for (std::size_t c : verify::kChannelSweep) {
    const FracActivation x = random_activation(Dims{c, 5, 4}, rng);
    const auto w = random_weights(3, c, 3, rng);
    const std::vector<std::int32_t> delta(3, kGateAlwaysOpen);
    const FracConvResult r = frac_conv2d(x, w, ConvGeometry{3, 2, 1}, delta);
    oracle::DenseTensor x2(x.dims());
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t h = 0; h < 5; ++h)
        for (std::size_t ww = 0; ww < 4; ++ww) x2.at(ch, h, ww) = x.value(ch, h, ww);
    std::vector<oracle::DenseTensor> dw;
    for (const auto& p : w) dw.push_back(oracle::from_plane(p));
    const auto ref = oracle::conv2d(x2, dw, 3, 2, 1);
    for (std::size_t i = 0; i < ref.values.size(); ++i) EXPECT_EQ(r.output.values[i], ref.values[i]);
    EXPECT_DOUBLE_EQ(r.sparsity(), 0.0);
  }
}

TEST(FracConv, GateMonotoneInDelta) {
  std::mt19937_64 rng(10);
  const FracActivation x = random_activation(Dims{65, 6, 6}, rng);
  const auto w = random_weights(2, 65, 3, rng);
  std::vector<std::uint8_t> prev;
  for (std::int32_t d = -600; d <= 600; d += 40) {
    const FracConvResult r = frac_conv2d(x, w, ConvGeometry{3, 1, 1}, std::vector<std::int32_t>(2, d));
    for (std::size_t i = 0; i < prev.size(); ++i) EXPECT_LE(r.update_mask[i], prev[i]);
    prev = r.update_mask;
  }
}

TEST(FracConv, SkippedOutputsAreEvenAndBounded) {
  std::mt19937_64 rng(12);
  const FracActivation x = random_activation(Dims{64, 6, 6}, rng);
  const auto w = random_weights(4, 64, 3, rng);
  const FracConvResult r = frac_conv2d(x, w, ConvGeometry{3, 1, 1}, std::vector<std::int32_t>(4, 0));
  for (std::size_t i = 0; i < r.output.values.size(); ++i) {
    if (!r.update_mask[i]) {
      EXPECT_EQ(r.output.values[i] % 2, 0);
    }
    EXPECT_LE(std::abs(r.output.values[i]), 3 * 9 * 64);
  }
  EXPECT_GT(r.updated, 0u);
  EXPECT_LT(r.updated, r.output.values.size());
}

TEST(FracConv, RejectsDeltaLength) {
  std::mt19937_64 rng(13);
  const FracActivation x = random_activation(Dims{4, 3, 3}, rng);
  EXPECT_THROW(frac_conv2d(x, random_weights(2, 4, 3, rng), ConvGeometry{}, std::vector<std::int32_t>(3, 0)),
               ShapeError);
  EXPECT_THROW(FracActivation(random_plane(Dims{4, 3, 3}, rng), random_plane(Dims{4, 3, 2}, rng)), ShapeError);
}

TEST(Quantize, TieRules) {
  const std::int32_t s = q16::kOne;
  const Dims d{1, 1, 5};
  const FracActivation q = quantize2bit(
      map_of(d, {5 * s / 2, 0, -2 * s, 2 * s - 1, -5 * s / 2}), std::vector<std::int32_t>{s});
  const int expect[5] = {3, 1, -1, 1, -3};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(q.value(0, 0, i), expect[i]) << i;
  EXPECT_EQ(q.msb().value(0, 0, 0), 1);
  EXPECT_EQ(q.lsb().value(0, 0, 0), 1);
  EXPECT_EQ(q.msb().value(0, 0, 1), 1);
  EXPECT_EQ(q.lsb().value(0, 0, 1), -1);
}

TEST(Quantize, NearestLevel) {
  std::mt19937_64 rng(14);
  for (int i = 0; i < 50; ++i) {
    const Dims d{3, 4, 4};
    std::vector<std::int32_t> v(d.volume());
    for (auto& x : v) x = static_cast<std::int32_t>(rng() % 800001) - 400000;
    const std::vector<std::int32_t> s{40000, 65536, 100001};
    const FracActivation q = quantize2bit(map_of(d, v), s);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < 16; ++p)
        EXPECT_EQ(q.value(c, p / 4, p % 4), oracle::quantize_level(v[c * 16 + p], s[c]));
  }
  EXPECT_THROW(quantize2bit(map_of(Dims{1, 1, 1}, {0}), std::vector<std::int32_t>{0}), std::invalid_argument);
}

TEST(SignBinarize, ZeroIsPlus) {
  const PackedBitPlane p = sign_binarize(map_of(Dims{1, 1, 3}, {0, -q16::kOne / 2, 7}));
  EXPECT_EQ(p.value(0, 0, 0), 1);
  EXPECT_EQ(p.value(0, 0, 1), -1);
  EXPECT_EQ(p.value(0, 0, 2), 1);
}

TEST(BatchNorm, IdentityAndZeroScale) {
  const Dims d{2, 2, 2};
  const FixedFeatureMap x = map_of(d, {1, -5, 70000, -123456, 9, 8, 7, 6});
  EXPECT_EQ(batchnorm_apply(x, std::vector<std::int32_t>(2, q16::kOne), std::vector<std::int32_t>(2, 0)), x);
  const FixedFeatureMap z = batchnorm_apply(x, std::vector<std::int32_t>(2, 0), std::vector<std::int32_t>{3, -4});
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(z.values[i], i < 4 ? 3 : -4);
  IntFeatureMap xi(d, 5);
  const FixedFeatureMap y = batchnorm_apply(xi, std::vector<std::int32_t>(2, q16::kOne), std::vector<std::int32_t>(2, 0));
  for (auto v : y.values) EXPECT_EQ(v, 5 * q16::kOne);
}

TEST(BatchNorm, SaturatesAndCounts) {
  q16::Diagnostics diag;
  ExecContext ctx;
  ctx.diagnostics = &diag;
  const FixedFeatureMap x = map_of(Dims{1, 1, 2}, {q16::kMax, q16::kMin});
  const FixedFeatureMap y = batchnorm_apply(x, std::vector<std::int32_t>{4 * q16::kOne},
                                            std::vector<std::int32_t>{0}, ctx);
  EXPECT_EQ(y.values[0], q16::kMax);
  EXPECT_EQ(y.values[1], q16::kMin);
  EXPECT_EQ(diag.saturations.load(), 2u);
}

TEST(BPReLU, OriginAndShift) {
  const std::vector<std::int32_t> alpha{3 * q16::kOne}, gamma{-q16::kOne / 2};
  const FixedFeatureMap at_origin =
      bprelu(map_of(Dims{1, 1, 1}, {alpha[0]}), alpha, std::vector<std::int32_t>{q16::kOne / 4}, gamma);
  EXPECT_EQ(at_origin.values[0], gamma[0]);
  std::vector<std::int32_t> xs;
  for (int i = -20; i <= 20; ++i) xs.push_back(i * 12345);
  const FixedFeatureMap x = map_of(Dims{1, 1, xs.size()}, xs);
  const FixedFeatureMap y = bprelu(x, alpha, std::vector<std::int32_t>{q16::kOne}, gamma);
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_EQ(y.values[i], xs[i] - alpha[0] + gamma[0]);
}

TEST(BPReLU, ContinuousAtOrigin) {
  std::mt19937_64 rng(15);
  for (int i = 0; i < 200; ++i) {
    const std::int32_t a = static_cast<std::int32_t>(rng() % 400001) - 200000;
    const std::int32_t b = static_cast<std::int32_t>(rng() % 65537);
    const std::int32_t g = static_cast<std::int32_t>(rng() % 400001) - 200000;
    const FixedFeatureMap y = bprelu(map_of(Dims{1, 1, 3}, {a - 1, a, a + 1}), std::vector<std::int32_t>{a},
                                     std::vector<std::int32_t>{b}, std::vector<std::int32_t>{g});
    EXPECT_LE(std::abs(y.values[0] - y.values[1]), 1);
    EXPECT_EQ(y.values[1], g);
    EXPECT_EQ(y.values[2], g + 1);
  }
}

TEST(Pooling, Examples) {
  const FixedFeatureMap c = map_of(Dims{1, 4, 4}, std::vector<std::int32_t>(16, -77777));
  for (auto v : avgpool2d(c).values) EXPECT_EQ(v, -77777);
  const std::int32_t one = q16::kOne;
  const FixedFeatureMap x = map_of(Dims{1, 2, 2}, {one, 2 * one, 3 * one, 4 * one});
  EXPECT_EQ(avgpool2d(x).values, std::vector<std::int32_t>{5 * one / 2});
  EXPECT_EQ(global_avgpool(x), std::vector<std::int32_t>{5 * one / 2});
  // 1/4 and 3/4 ulp round to nearest; 2/4 ties to even.
  EXPECT_EQ(avgpool2d(map_of(Dims{1, 2, 2}, {1, 0, 0, 0})).values[0], 0);
  EXPECT_EQ(avgpool2d(map_of(Dims{1, 2, 2}, {3, 0, 0, 0})).values[0], 1);
  EXPECT_EQ(avgpool2d(map_of(Dims{1, 2, 2}, {2, 0, 0, 0})).values[0], 0);
  EXPECT_EQ(avgpool2d(map_of(Dims{1, 2, 2}, {6, 0, 0, 0})).values[0], 2);
  EXPECT_EQ(avgpool2d(map_of(Dims{1, 2, 2}, {-2, 0, 0, 0})).values[0], 0);
  EXPECT_THROW(avgpool2d(map_of(Dims{1, 3, 2}, std::vector<std::int32_t>(6))), ShapeError);
}

TEST(Shortcut, DuplicateAndAdd) {
  FixedFeatureMap x(Dims{16, 2, 2});
  for (std::size_t i = 0; i < x.values.size(); ++i) x.values[i] = static_cast<std::int32_t>(i * 31 - 200);
  const FixedFeatureMap d = channel_duplicate(x);
  ASSERT_EQ(d.dims, (Dims{32, 2, 2}));
  for (std::size_t c = 0; c < 32; ++c)
    for (std::size_t p = 0; p < 4; ++p) EXPECT_EQ(d.at(c, p / 2, p % 2), x.at(c % 16, p / 2, p % 2));
  EXPECT_EQ(shortcut_add(x, FixedFeatureMap(x.dims)), x);
  const FixedFeatureMap s = shortcut_add(x, x);
  for (std::size_t i = 0; i < x.values.size(); ++i) EXPECT_EQ(s.values[i], 2 * x.values[i]);
  EXPECT_THROW(shortcut_add(x, d), ShapeError);
}

TEST(Classifier, IdentityAndBias) {
  const std::vector<std::int32_t> f{5, -7, 123456};
  std::vector<std::int8_t> eye(9, 0);
  for (std::size_t i = 0; i < 3; ++i) eye[i * 4] = 1;
  EXPECT_EQ(linear_classifier(f, eye, std::vector<std::int32_t>(3, 0)), f);
  const std::vector<std::int32_t> bias{1, -2, 3};
  EXPECT_EQ(linear_classifier(std::vector<std::int32_t>(3, 0), eye, bias), bias);
  EXPECT_EQ(argmax(std::vector<std::int32_t>{1, 9, 9, -3}), 1u);
}

TEST(Classifier, SaturatesLogits) {
  q16::Diagnostics diag;
  ExecContext ctx;
  ctx.diagnostics = &diag;
  const std::vector<std::int32_t> f(4, q16::kMax);
  std::vector<std::int8_t> w(8, 127);
  for (std::size_t i = 4; i < 8; ++i) w[i] = -127;
  const auto logits = linear_classifier(f, w, std::vector<std::int32_t>{0, 0}, ctx);
  EXPECT_EQ(logits[0], q16::kMax);
  EXPECT_EQ(logits[1], q16::kMin);
  EXPECT_EQ(diag.saturations.load(), 2u);
}

TEST(Kernels, ThreadCountDoesNotChangeResults) {
  std::mt19937_64 rng(16);
  const FracActivation x = random_activation(Dims{96, 9, 7}, rng);
  const auto w = random_weights(13, 96, 3, rng);
  std::vector<std::int32_t> delta(13);
  for (auto& d : delta) d = static_cast<std::int32_t>(rng() % 200) - 100;
  const FracConvResult one = frac_conv2d(x, w, ConvGeometry{3, 1, 1}, delta, ExecContext{1});
  for (int t : {2, 3, 4, 8, 32}) {
    const FracConvResult r = frac_conv2d(x, w, ConvGeometry{3, 1, 1}, delta, ExecContext{t});
    EXPECT_EQ(r.output, one.output);
    EXPECT_EQ(r.update_mask, one.update_mask);
    EXPECT_EQ(r.updated, one.updated);
  }
}

class OracleCheck : public ::testing::TestWithParam<int> {};

TEST_P(OracleCheck, MatchesOracle) {
  const auto opt = small_options();
  const auto results = verify::run_kernel_checks(opt);
  const auto& r = results.at(static_cast<std::size_t>(GetParam()));
  EXPECT_EQ(r.cases, opt.cases) << r.name;
  EXPECT_TRUE(r.passed()) << r.name << ": " << r.first_failure;
}

INSTANTIATE_TEST_SUITE_P(AllKernels, OracleCheck, ::testing::Range(0, 7));

TEST(OracleCheck, InjectedFaultIsCaught) {
  auto opt = small_options();
  opt.cases = 12;
  opt.inject_fault = true;
  for (const auto& r : verify::run_kernel_checks(opt)) EXPECT_FALSE(r.passed()) << r.name;
}
