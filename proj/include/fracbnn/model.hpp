#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fracbnn/encoding.hpp"
#include "fracbnn/image.hpp"
#include "fracbnn/kernels.hpp"
#include "fracbnn/modelfile.hpp"
#include "fracbnn/network.hpp"

namespace fracbnn {

struct LayerStats {
  std::string name;
  BlockKind kind{};
  Dims output{};
  bool fractional = false;
  std::uint64_t outputs = 0;
  std::uint64_t updated = 0;       // LSB updates performed (fractional layers)
  std::uint64_t base_bmacs = 0;    // input layer or MSB pass
  std::uint64_t update_bmacs = 0;  // LSB pass actually executed
  double seconds = 0;              // wall time, excluded from deterministic reports

  double sparsity() const {
    return fractional && outputs ? 1.0 - static_cast<double>(updated) / static_cast<double>(outputs)
                                 : 0.0;
  }
};

struct RunStats {
  std::vector<LayerStats> layers;
  std::uint64_t saturations = 0;

  // Skipped-update fraction pooled over all fractional output elements.
  double mean_sparsity() const {
    std::uint64_t outputs = 0, updated = 0;
    for (const auto& l : layers)
      if (l.fractional) {
        outputs += l.outputs;
        updated += l.updated;
      }
    return outputs ? 1.0 - static_cast<double>(updated) / static_cast<double>(outputs) : 1.0;
  }
  double effective_bitwidth() const { return 1.0 + (1.0 - mean_sparsity()); }
  std::uint64_t base_bmacs() const {
    std::uint64_t n = 0;
    for (const auto& l : layers) n += l.base_bmacs;
    return n;
  }
  std::uint64_t update_bmacs() const {
    std::uint64_t n = 0;
    for (const auto& l : layers) n += l.update_bmacs;
    return n;
  }
};

struct ForwardResult {
  std::vector<std::int32_t> logits;
  std::size_t predicted = 0;
  RunStats stats;
};

// Called after every conv layer with the raw conv output (for fractional
// layers already gated) and the BatchNorm input. Return false to stop the
// forward pass early; the result then holds no logits.
using ConvObserver = std::function<bool(std::size_t conv_index, const IntFeatureMap& conv_out,
                                        const FixedFeatureMap& pre_bn)>;

// Throws ShapeError naming the first model layer that disagrees with `net`.
inline void check_model_matches(const NetworkSpec& net, const Model& m) {
  std::size_t ci = 0;
  for (const auto& b : net.blocks) {
    if (is_conv(b.kind)) {
      if (ci >= m.convs.size())
        throw ShapeError("layer " + b.name + ": missing from model");
      const ConvLayer& l = m.convs[ci];
      if (l.kind != b.kind || l.in_channels != b.in_channels || l.out_channels != b.out_channels ||
          l.in_height != b.in_height || l.in_width != b.in_width || !(l.geometry == b.geometry) ||
          l.weights.size() != b.out_channels)
        throw ShapeError("layer " + b.name + ": model record does not match network");
      for (const auto& w : l.weights)
        if (w.dims() != Dims{b.in_channels, b.geometry.kernel, b.geometry.kernel})
          throw ShapeError("layer " + b.name + ": weight plane dims " + to_string(w.dims()));
      l.params.validate(b.out_channels);
      ++ci;
    } else if (b.kind == BlockKind::classifier) {
      const Classifier& c = m.classifier;
      if (c.in_features != b.in_channels || c.classes != b.out_channels ||
          c.weights.size() != c.in_features * c.classes || c.bias.size() != c.classes)
        throw ShapeError("layer " + b.name + ": classifier does not match network");
    }
  }
  if (ci != m.convs.size()) throw ShapeError("model has extra conv layers");
}

namespace detail {
inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}
}  // namespace detail

// Packed-kernel forward pass over one image.
inline ForwardResult forward(const NetworkSpec& net, const Model& m, const Image& img,
                             const ExecContext& ctx = {}, const ConvObserver& observer = {}) {
  check_model_matches(net, m);
  if (img.height != net.image_height || img.width != net.image_width)
    throw ShapeError("image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                     " does not match network input " + std::to_string(net.image_height) + "x" +
                     std::to_string(net.image_width));
  q16::Diagnostics diag;
  ExecContext run_ctx = ctx;
  if (!run_ctx.diagnostics) run_ctx.diagnostics = &diag;

  ForwardResult result;
  FixedFeatureMap act;
  const std::vector<std::int32_t>* act_scale = nullptr;  // producer's quantizer step
  std::vector<std::int32_t> pooled;
  std::size_t ci = 0;

  for (const auto& b : net.blocks) {
    const auto t0 = std::chrono::steady_clock::now();
    LayerStats st;
    st.name = b.name;
    st.kind = b.kind;
    st.output = b.output_dims();
    const std::uint64_t window = b.geometry.kernel * b.geometry.kernel * b.in_channels;

    if (is_conv(b.kind)) {
      const ConvLayer& layer = m.convs[ci];
      const ChannelParams& p = layer.params;
      IntFeatureMap conv;
      if (b.kind == BlockKind::input_layer) {
        const PackedBitPlane x = encode_image_thermometer(img, ThermometerConfig(net.resolution));
        conv = binary_conv2d(x, layer.weights, b.geometry, run_ctx);
        st.outputs = conv.values.size();
        st.base_bmacs = st.outputs * window;
      } else {
        const FracActivation q = quantize2bit(act, *act_scale);
        FracConvResult fr = frac_conv2d(q, layer.weights, b.geometry, p.delta, run_ctx);
        st.fractional = true;
        st.outputs = fr.output.values.size();
        st.updated = fr.updated;
        st.base_bmacs = st.outputs * window;
        st.update_bmacs = fr.updated * window;
        conv = std::move(fr.output);
      }
      FixedFeatureMap y = bprelu(to_fixed(conv, run_ctx), p.alpha, p.beta, p.gamma, run_ctx);
      if (b.has_shortcut)
        y = shortcut_add(y, b.downsample ? channel_duplicate(avgpool2d(act)) : act, run_ctx);
      if (observer && !observer(ci, conv, y)) {
        result.stats.saturations = run_ctx.diagnostics->saturations.load();
        return result;
      }
      act = batchnorm_apply(y, p.bn_scale, p.bn_bias, run_ctx);
      act_scale = &p.act_scale;
      ++ci;
    } else if (b.kind == BlockKind::pool) {
      pooled = global_avgpool(act);
    } else if (b.kind == BlockKind::classifier) {
      result.logits = linear_classifier(pooled, m.classifier.weights, m.classifier.bias, run_ctx);
      result.predicted = argmax(result.logits);
    }
    st.seconds = detail::seconds_since(t0);
    result.stats.layers.push_back(std::move(st));
  }
  result.stats.saturations = run_ctx.diagnostics->saturations.load();
  return result;
}

inline ForwardResult forward(const Model& m, const Image& img, const ExecContext& ctx = {}) {
  return forward(network_for(m), m, img, ctx);
}

}  // namespace fracbnn
