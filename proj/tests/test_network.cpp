#include <gtest/gtest.h>

#include "fracbnn/fracbnn.hpp"
#include "fracbnn/oracle.hpp"

using namespace fracbnn;

namespace {

// 2x2 image, one-bit thermometer, 1x1 input conv to one channel, one
// fractional 3x3 unit, pooling, one-class classifier.
NetworkSpec micro_net() {
  NetworkSpec net;
  net.image_height = net.image_width = 2;
  net.resolution = 255;
  net.classes = 1;
  net.blocks.push_back({BlockKind::input_layer, "input", 3, 1, 2, 2, {1, 1, 0}, false, false});
  net.blocks.push_back({BlockKind::conv3x3_block, "unit", 1, 1, 2, 2, {3, 1, 1}, true, false});
  net.blocks.push_back({BlockKind::pool, "pool", 1, 1, 2, 2, {1, 1, 0}, false, false});
  net.blocks.push_back({BlockKind::classifier, "classifier", 1, 1, 1, 1, {1, 1, 0}, false, false});
  return net;
}

ConvLayer layer_for(const BlockSpec& b) {
  ConvLayer l;
  l.kind = b.kind;
  l.in_channels = b.in_channels;
  l.out_channels = b.out_channels;
  l.in_height = b.in_height;
  l.in_width = b.in_width;
  l.geometry = b.geometry;
  l.params = ChannelParams(b.out_channels);
  const Dims wd{b.in_channels, b.geometry.kernel, b.geometry.kernel};
  l.weights.assign(b.out_channels, pack(std::vector<std::int8_t>(wd.volume(), 1), wd));
  return l;
}

Model micro_model(std::int32_t delta) {
  const NetworkSpec net = micro_net();
  Model m;
  m.resolution = 255;
  m.classes = 1;
  m.convs = {layer_for(net.blocks[0]), layer_for(net.blocks[1])};
  m.convs[0].params.beta = {q16::kOne / 2};
  m.convs[1].params.delta = {delta};
  m.convs[1].params.bn_scale = {q16::kOne / 2};
  m.convs[1].params.bn_bias = {q16::kOne};
  m.classifier = {1, 1, {2}, {10}};
  return m;
}

Image micro_image() { return Image(2, 2, {255, 0, 0, 255, 255, 0, 0, 0, 0, 255, 255, 255}); }

}  // namespace

TEST(Network, ResNet20Shapes) {
  const NetworkSpec net = build_fracbnn_resnet20();
  EXPECT_NO_THROW(net.validate());
  EXPECT_EQ(net.conv_count(), 19u);
  ASSERT_EQ(net.blocks.size(), 21u);
  EXPECT_EQ(net.blocks[0].input_dims(), (Dims{96, 32, 32}));
  EXPECT_EQ(net.blocks[0].output_dims(), (Dims{16, 32, 32}));
  EXPECT_EQ(net.blocks[6].output_dims(), (Dims{16, 32, 32}));
  EXPECT_EQ(net.blocks[7].output_dims(), (Dims{32, 16, 16}));
  EXPECT_EQ(net.blocks[13].output_dims(), (Dims{64, 8, 8}));
  EXPECT_EQ(net.blocks[18].output_dims(), (Dims{64, 8, 8}));
  EXPECT_EQ(net.blocks[19].output_dims(), (Dims{64, 1, 1}));
  EXPECT_EQ(net.blocks[20].output_dims(), (Dims{10, 1, 1}));
  for (const auto& b : net.blocks)
    if (b.downsample) {
      EXPECT_EQ(b.geometry.stride, 2u);
      EXPECT_EQ(b.out_channels, 2 * b.in_channels);
    }
}

TEST(Network, ValidateRejectsBrokenGraphs) {
  NetworkSpec net = build_fracbnn_resnet20();
  net.blocks[3].in_channels = 17;
  EXPECT_THROW(net.validate(), ShapeError);
  net = build_fracbnn_resnet20();
  std::swap(net.blocks[0], net.blocks[1]);
  EXPECT_THROW(net.validate(), ShapeError);
  net = build_fracbnn_resnet20();
  net.blocks[7].geometry.stride = 1;
  EXPECT_THROW(net.validate(), ShapeError);
  EXPECT_NO_THROW(micro_net().validate());
}

TEST(Accounting, ResNet20) {
  const OpCounts c = count_ops(build_fracbnn_resnet20());
  EXPECT_EQ(c.binary_weight_params, 281088u);
  EXPECT_EQ(c.input_bmacs, 14155776u);
  EXPECT_EQ(c.base_bmacs, 40108032u);
  EXPECT_EQ(c.update_bmacs_max, c.base_bmacs);
  EXPECT_EQ(c.imacs, 640u);
  EXPECT_DOUBLE_EQ(c.total_bmacs(1.0), static_cast<double>(c.input_bmacs + c.base_bmacs));
  EXPECT_NEAR(c.total_bmacs(0.6), 70307020.8, 1.0);
}

TEST(Accounting, MicroNetHandCount) {
  const OpCounts c = count_ops(micro_net());
  EXPECT_EQ(c.binary_weight_params, 3u + 9u);
  EXPECT_EQ(c.input_bmacs, 3u * 4u);
  EXPECT_EQ(c.base_bmacs, 9u * 4u);
  EXPECT_EQ(c.update_bmacs_max, 9u * 4u);
  EXPECT_EQ(c.imacs, 1u);
  EXPECT_EQ(c.channel_params, 7u + 7u + 1u);
  EXPECT_DOUBLE_EQ(c.total_bmacs(0.5), 12 + 36 + 18);
}

TEST(Forward, MicroNetHandComputed) {
  // Encoded input (+--, ++-, ---, +++) with all-ones weights gives -1, 1, -3, 3.
  // BPReLU slope 1/2 -> -0.5, 1, -1.5, 3; quantized -1, 1, -1, 3, so the MSB
  // sum is 0 and the LSB sum is 2 at every output. With delta = -1 every
  // update runs: conv = 2, plus shortcut = 1.5, 3, 0.5, 5; BN (x/2 + 1) gives
  // 1.75, 2.5, 1.25, 3.5; mean 2.25; logit 2 * 2.25 + 10 ulp.
  const NetworkSpec net = micro_net();
  const Model m = micro_model(-1);
  const ForwardResult r = forward(net, m, micro_image());
  ASSERT_EQ(r.logits.size(), 1u);
  EXPECT_EQ(r.logits[0], 2 * 147456 + 10);
  EXPECT_DOUBLE_EQ(r.stats.mean_sparsity(), 0.0);
  EXPECT_EQ(oracle::forward(net, m, micro_image()).logits, std::vector<std::int64_t>{2 * 147456 + 10});

  // With delta = 0 no update runs: conv = 0, shortcut only, BN gives
  // 0.75, 1.5, 0.25, 2.5; mean 1.25.
  const ForwardResult closed = forward(net, micro_model(0), micro_image());
  EXPECT_EQ(closed.logits[0], 2 * 81920 + 10);
  EXPECT_DOUBLE_EQ(closed.stats.mean_sparsity(), 1.0);
}

TEST(Forward, MatchesOracleOnSyntheticModels) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Model m = generate_synthetic(seed);
    const NetworkSpec net = network_for(m);
    for (std::uint64_t s = 1; s <= 2; ++s) {
      const Image img = s % 2 ? smooth_image(32, 32, seed * 10 + s) : random_image(32, 32, seed * 10 + s);
      const ForwardResult r = forward(net, m, img);
      const auto ref = oracle::forward(net, m, img);
      ASSERT_EQ(r.logits.size(), ref.logits.size());
      for (std::size_t k = 0; k < ref.logits.size(); ++k) EXPECT_EQ(r.logits[k], ref.logits[k]);
      EXPECT_EQ(r.predicted, ref.predicted);
      EXPECT_EQ(r.stats.layers.size(), net.blocks.size());
    }
  }
}

TEST(Forward, ClosedGatesEqualOneBitNetwork) {
  const Model m = with_uniform_gates(generate_synthetic(4), kGateAlwaysClosed);
  const NetworkSpec net = network_for(m);
  const Image img = smooth_image(32, 32, 4);
  const ForwardResult r = forward(net, m, img);
  EXPECT_DOUBLE_EQ(r.stats.effective_bitwidth(), 1.0);
  EXPECT_EQ(r.stats.update_bmacs(), 0u);

  // 1-bit reference: sign activations, dense conv doubled.
  FixedFeatureMap act;
  std::vector<std::int32_t> pooled;
  std::size_t ci = 0;
  for (const auto& b : net.blocks) {
    if (is_conv(b.kind)) {
      const ConvLayer& l = m.convs[ci++];
      std::vector<oracle::DenseTensor> w;
      for (const auto& p : l.weights) w.push_back(oracle::from_plane(p));
      IntFeatureMap conv(b.output_dims());
      if (b.kind == BlockKind::input_layer) {
        const auto ref = oracle::conv2d(oracle::encode_thermometer(img, net.resolution), w, 3, 1, 1);
        for (std::size_t i = 0; i < ref.values.size(); ++i) conv.values[i] = static_cast<std::int32_t>(ref.values[i]);
      } else {
        oracle::DenseTensor s(act.dims);
        for (std::size_t i = 0; i < act.values.size(); ++i) s.values[i] = act.values[i] >= 0 ? 1 : -1;
        const auto ref = oracle::conv2d(s, w, 3, b.geometry.stride, 1);
        for (std::size_t i = 0; i < ref.values.size(); ++i) conv.values[i] = static_cast<std::int32_t>(2 * ref.values[i]);
      }
      FixedFeatureMap y = bprelu(to_fixed(conv), l.params.alpha, l.params.beta, l.params.gamma);
      if (b.has_shortcut) y = shortcut_add(y, b.downsample ? channel_duplicate(avgpool2d(act)) : act);
      act = batchnorm_apply(y, l.params.bn_scale, l.params.bn_bias);
    } else if (b.kind == BlockKind::pool) {
      pooled = global_avgpool(act);
    }
  }
  EXPECT_EQ(r.logits, linear_classifier(pooled, m.classifier.weights, m.classifier.bias));
}

TEST(Forward, OpenGatesGiveTwoBits) {
  const Model m = with_uniform_gates(generate_synthetic(5), kGateAlwaysOpen);
  const ForwardResult r = forward(m, smooth_image(32, 32, 5));
  EXPECT_DOUBLE_EQ(r.stats.effective_bitwidth(), 2.0);
  EXPECT_EQ(r.stats.update_bmacs(), count_ops(network_for(m)).update_bmacs_max);
}

TEST(Forward, ThreadCountsAgree) {
  const Model m = generate_synthetic(6);
  const Image img = random_image(32, 32, 6);
  const ForwardResult one = forward(m, img, ExecContext{1});
  for (int t : {2, 4, 7}) {
    const ForwardResult r = forward(m, img, ExecContext{t});
    EXPECT_EQ(r.logits, one.logits);
    EXPECT_EQ(r.stats.mean_sparsity(), one.stats.mean_sparsity());
  }
}

TEST(Forward, RejectsMismatchedInputs) {
  Model m = generate_synthetic(7);
  EXPECT_THROW(forward(m, smooth_image(16, 16, 1)), ShapeError);
  m.convs[3].weights.pop_back();
  try {
    forward(m, smooth_image(32, 32, 1));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("stage1.block2.conv1"), std::string::npos) << e.what();
  }
}

TEST(Forward, ObserverSeesEveryConv) {
  const Model m = generate_synthetic(8);
  std::size_t seen = 0;
  forward(network_for(m), m, smooth_image(32, 32, 8), {},
          [&](std::size_t i, const IntFeatureMap& conv, const FixedFeatureMap& pre_bn) {
            EXPECT_EQ(i, seen++);
            EXPECT_EQ(conv.dims, pre_bn.dims);
            return true;
          });
  EXPECT_EQ(seen, 19u);
}

TEST(Synthetic, DeterministicAndValid) {
  const Model a = generate_synthetic(9), b = generate_synthetic(9);
  EXPECT_EQ(a, b);
  EXPECT_EQ(save_model(a), save_model(b));
  EXPECT_NE(save_model(a), save_model(generate_synthetic(10)));
  EXPECT_NO_THROW(load_model(save_model(a)));
  EXPECT_NO_THROW(check_model_matches(network_for(a), a));
}

TEST(Synthetic, SparsityNearHalf) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const Model m = generate_synthetic(seed);
    for (std::uint64_t s = 100; s < 103; ++s) {
      const double sp = forward(m, random_image(32, 32, s)).stats.mean_sparsity();
      EXPECT_GE(sp, 0.3) << "seed " << seed;
      EXPECT_LE(sp, 0.7) << "seed " << seed;
    }
  }
}
