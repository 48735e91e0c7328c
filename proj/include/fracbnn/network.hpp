#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fracbnn/bitpack.hpp"
#include "fracbnn/encoding.hpp"
#include "fracbnn/kernels.hpp"

namespace fracbnn {

enum class BlockKind : std::uint8_t {
  input_layer = 1,     // binary conv over thermometer channels, then BPReLU and BN
  conv3x3_block = 2,   // fractional 3x3 conv unit
  conv1x1_block = 3,   // fractional 1x1 conv unit
  pool = 4,            // global average pooling
  classifier = 5,      // integer linear layer
};

inline std::string to_string(BlockKind k) {
  switch (k) {
    case BlockKind::input_layer: return "input_layer";
    case BlockKind::conv3x3_block: return "conv3x3_block";
    case BlockKind::conv1x1_block: return "conv1x1_block";
    case BlockKind::pool: return "pool";
    case BlockKind::classifier: return "classifier";
  }
  return "unknown";
}

inline bool is_conv(BlockKind k) {
  return k == BlockKind::input_layer || k == BlockKind::conv3x3_block ||
         k == BlockKind::conv1x1_block;
}

inline bool is_fractional(BlockKind k) {
  return k == BlockKind::conv3x3_block || k == BlockKind::conv1x1_block;
}

// One node of the layer graph.
//
// Fractional units compute
//   sign/2-bit quantize -> frac conv -> BPReLU -> + shortcut -> BatchNorm
// where the shortcut is the unit input, or for downsample units its 2x2
// average pool followed by channel duplication.
struct BlockSpec {
  BlockKind kind{};
  std::string name;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t in_height = 0;
  std::size_t in_width = 0;
  ConvGeometry geometry{};  // conv kinds only
  bool has_shortcut = false;
  bool downsample = false;

  Dims input_dims() const { return {in_channels, in_height, in_width}; }
  Dims output_dims() const {
    switch (kind) {
      case BlockKind::pool: return {in_channels, 1, 1};
      case BlockKind::classifier: return {out_channels, 1, 1};
      default: return geometry.output_dims(input_dims(), out_channels);
    }
  }
  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

struct NetworkSpec {
  std::vector<BlockSpec> blocks;
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  int resolution = 8;
  std::size_t classes = 10;

  // Throws on the first block whose shapes do not compose.
  void validate() const {
    if (blocks.size() < 2 || blocks.front().kind != BlockKind::input_layer ||
        blocks.back().kind != BlockKind::classifier)
      throw ShapeError("network must start with input_layer and end with classifier");
    Dims cur{3 * ThermometerConfig(resolution).length(), image_height, image_width};
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const BlockSpec& b = blocks[i];
      if (i > 0 && b.kind == BlockKind::input_layer)
        throw ShapeError("block " + std::to_string(i) + " (" + b.name + "): extra input_layer");
      if (i + 1 < blocks.size() && b.kind == BlockKind::classifier)
        throw ShapeError("block " + std::to_string(i) + " (" + b.name + "): classifier not last");
      if (b.input_dims() != cur && b.kind != BlockKind::classifier)
        throw ShapeError("block " + std::to_string(i) + " (" + b.name + "): input " +
                         to_string(b.input_dims()) + " does not match " + to_string(cur));
      if (b.kind == BlockKind::classifier) {
        if (cur.height != 1 || cur.width != 1 || b.in_channels != cur.channels ||
            b.out_channels != classes)
          throw ShapeError("block " + std::to_string(i) + " (" + b.name +
                           "): classifier shape mismatch");
      }
      if (is_conv(b.kind)) b.geometry.validate();
      if (b.downsample &&
          (b.geometry.stride != 2 || b.out_channels != 2 * b.in_channels || !b.has_shortcut))
        throw ShapeError("block " + std::to_string(i) + " (" + b.name +
                         "): downsample needs stride 2 and doubled channels");
      if (b.has_shortcut && !b.downsample && b.output_dims() != b.input_dims())
        throw ShapeError("block " + std::to_string(i) + " (" + b.name +
                         "): identity shortcut shape mismatch");
      cur = b.output_dims();
    }
  }

  std::size_t conv_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += is_conv(b.kind);
    return n;
  }
};

// ResNet-20 for 32x32 CIFAR images: a binary input layer over 3*ceil(255/R)
// thermometer channels, then three stages (16/32/64 channels) of three
// residual blocks, each block being two fractional 3x3 units with their
// own shortcut, then global average pooling and an integer classifier.
inline NetworkSpec build_fracbnn_resnet20(int resolution = 8, std::size_t classes = 10) {
  NetworkSpec net;
  net.resolution = resolution;
  net.classes = classes;
  const std::size_t in_ch = 3 * ThermometerConfig(resolution).length();
  net.blocks.push_back({BlockKind::input_layer, "input", in_ch, 16, 32, 32, {3, 1, 1}, false, false});
  std::size_t ch = 16, size = 32;
  for (std::size_t stage = 0; stage < 3; ++stage) {
    for (std::size_t block = 0; block < 3; ++block) {
      for (std::size_t unit = 0; unit < 2; ++unit) {
        const bool down = stage > 0 && block == 0 && unit == 0;
        const std::size_t out = down ? ch * 2 : ch;
        BlockSpec b{BlockKind::conv3x3_block,
                    "stage" + std::to_string(stage + 1) + ".block" + std::to_string(block + 1) +
                        ".conv" + std::to_string(unit + 1),
                    ch, out, size, size, {3, down ? 2u : 1u, 1}, true, down};
        net.blocks.push_back(b);
        if (down) {
          ch *= 2;
          size /= 2;
        }
      }
    }
  }
  net.blocks.push_back({BlockKind::pool, "pool", ch, ch, size, size, {1, 1, 0}, false, false});
  net.blocks.push_back({BlockKind::classifier, "classifier", ch, classes, 1, 1, {1, 1, 0}, false, false});
  return net;
}

// Static op and parameter accounting. One BMAC is one XNOR lane feeding a
// popcount; every output element is charged the full k*k*C_in window.
struct OpCounts {
  std::uint64_t binary_weight_params = 0;  // input layer + fractional units
  std::uint64_t input_bmacs = 0;           // binary input layer
  std::uint64_t base_bmacs = 0;            // MSB pass of fractional units
  std::uint64_t update_bmacs_max = 0;      // LSB pass with every gate open
  std::uint64_t imacs = 0;                 // integer classifier MACs
  std::uint64_t classifier_params = 0;
  std::uint64_t channel_params = 0;

  // Total BMACs at update-phase sparsity sigma.
  double total_bmacs(double sparsity) const {
    return static_cast<double>(input_bmacs + base_bmacs) +
           (1.0 - sparsity) * static_cast<double>(update_bmacs_max);
  }
  // Storage in bits: 1 per binary weight, 8 per classifier weight, 32 per
  // channel parameter and classifier bias.
  std::uint64_t model_bits() const {
    return binary_weight_params + 8 * classifier_params + 32 * channel_params;
  }
};

inline OpCounts count_ops(const NetworkSpec& net) {
  OpCounts n;
  for (const auto& b : net.blocks) {
    if (is_conv(b.kind)) {
      const Dims out = b.output_dims();
      const std::uint64_t window = b.geometry.kernel * b.geometry.kernel * b.in_channels;
      const std::uint64_t params = window * b.out_channels;
      const std::uint64_t macs = params * out.height * out.width;
      n.binary_weight_params += params;
      n.channel_params += 7 * b.out_channels;
      if (b.kind == BlockKind::input_layer) {
        n.input_bmacs += macs;
      } else {
        n.base_bmacs += macs;
        n.update_bmacs_max += macs;
      }
    } else if (b.kind == BlockKind::classifier) {
      n.imacs += b.in_channels * b.out_channels;
      n.classifier_params += b.in_channels * b.out_channels;
      n.channel_params += b.out_channels;
    }
  }
  return n;
}

}  // namespace fracbnn
