#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fracbnn/bitpack.hpp"
#include "fracbnn/kernels.hpp"
#include "fracbnn/network.hpp"

namespace fracbnn {

inline constexpr std::uint16_t kModelVersion = 1;
inline constexpr std::uint16_t kTopologyResNet20 = 1;
inline constexpr std::uint8_t kPaddingZeroContribution = 1;

struct ConvLayer {
  BlockKind kind = BlockKind::conv3x3_block;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t in_height = 0;
  std::size_t in_width = 0;
  ConvGeometry geometry{};
  std::vector<PackedBitPlane> weights;  // one (C_in, k, k) plane per output channel
  ChannelParams params;

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

struct Classifier {
  std::size_t in_features = 0;
  std::size_t classes = 0;
  std::vector<std::int8_t> weights;  // classes x in_features, row-major
  std::vector<std::int32_t> bias;

  friend bool operator==(const Classifier&, const Classifier&) = default;
};

// Everything needed to run a network: topology tag plus all learned values.
struct Model {
  std::uint16_t version = kModelVersion;
  std::uint16_t topology = kTopologyResNet20;
  std::uint8_t resolution = 8;
  std::uint16_t classes = 10;
  std::vector<ConvLayer> convs;
  Classifier classifier;

  friend bool operator==(const Model&, const Model&) = default;
};

inline NetworkSpec network_for(std::uint16_t topology, int resolution, std::size_t classes) {
  if (topology != kTopologyResNet20)
    throw std::invalid_argument("unknown topology tag " + std::to_string(topology));
  return build_fracbnn_resnet20(resolution, classes);
}

inline NetworkSpec network_for(const Model& m) {
  return network_for(m.topology, m.resolution, m.classes);
}

class ModelFileError : public std::runtime_error {
 public:
  enum class Code {
    bad_magic,
    unsupported_version,
    unknown_topology,
    truncated,
    trailing_bytes,
    crc_mismatch,
    shape_mismatch,
    nonzero_padding,
    invalid_param,
  };

  // layer < 0 means the file header.
  ModelFileError(Code code, std::size_t offset, long layer, const std::string& detail)
      : std::runtime_error("model file: " + name(code) + " at byte " + std::to_string(offset) +
                           (layer < 0 ? std::string(" (header)")
                                      : " (layer " + std::to_string(layer) + ")") +
                           ": " + detail),
        code_(code),
        offset_(offset),
        layer_(layer) {}

  Code code() const { return code_; }
  std::size_t offset() const { return offset_; }
  long layer() const { return layer_; }

  static std::string name(Code c) {
    switch (c) {
      case Code::bad_magic: return "bad magic";
      case Code::unsupported_version: return "unsupported version";
      case Code::unknown_topology: return "unknown topology";
      case Code::truncated: return "truncated";
      case Code::trailing_bytes: return "trailing bytes";
      case Code::crc_mismatch: return "CRC mismatch";
      case Code::shape_mismatch: return "shape mismatch";
      case Code::nonzero_padding: return "nonzero padding lanes";
      case Code::invalid_param: return "invalid parameter";
    }
    return "error";
  }

 private:
  Code code_;
  std::size_t offset_;
  long layer_;
};

// CRC-32, IEEE 802.3 polynomial.
inline std::uint32_t crc32_ieee(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in bounded chunks.
  std::size_t done = 0;
  while (done < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - done, 1u << 30);
    crc = ::crc32(crc, bytes.data() + done, static_cast<uInt>(n));
    done += n;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void i32(std::int32_t v) { put(static_cast<std::uint32_t>(v), 4); }
  void raw(const char* s, std::size_t n) { out_.insert(out_.end(), s, s + n); }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> in, std::size_t limit) : in_(in), limit_(limit) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return limit_ - pos_; }
  void set_layer(long layer) { layer_ = layer; }

  void need(std::size_t n, const std::string& what) const {
    if (remaining() < n)
      throw ModelFileError(ModelFileError::Code::truncated, pos_, layer_,
                           "need " + std::to_string(n) + " bytes for " + what + ", " +
                               std::to_string(remaining()) + " left");
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  std::int32_t i32() { return static_cast<std::int32_t>(static_cast<std::uint32_t>(get(4))); }

 private:
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n), "field");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{in_[pos_ + i]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t limit_;
  std::size_t pos_ = 0;
  long layer_ = -1;
};

inline void write_params(ByteWriter& w, const ChannelParams& p) {
  for (const auto* v : {&p.delta, &p.bn_scale, &p.bn_bias, &p.alpha, &p.beta, &p.gamma,
                        &p.act_scale})
    for (auto x : *v) w.i32(x);
}

}  // namespace detail

inline constexpr std::size_t kModelHeaderBytes = 16;
inline constexpr std::size_t kLayerHeaderBytes = 12;

// Serializes a model. Layout is documented in docs/format.md.
inline std::vector<std::uint8_t> save_model(const Model& m) {
  detail::ByteWriter w;
  w.raw("FBNN", 4);
  w.u16(m.version);
  w.u16(m.topology);
  w.u8(m.resolution);
  w.u8(kPaddingZeroContribution);
  w.u16(m.classes);
  w.u16(static_cast<std::uint16_t>(m.convs.size() + 1));
  w.u16(0);
  for (const auto& l : m.convs) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    w.u8(static_cast<std::uint8_t>(l.geometry.kernel));
    w.u8(static_cast<std::uint8_t>(l.geometry.stride));
    w.u8(static_cast<std::uint8_t>(l.geometry.pad));
    w.u16(static_cast<std::uint16_t>(l.in_channels));
    w.u16(static_cast<std::uint16_t>(l.out_channels));
    w.u16(static_cast<std::uint16_t>(l.in_height));
    w.u16(static_cast<std::uint16_t>(l.in_width));
    for (const auto& plane : l.weights)
      for (auto word : plane.words()) w.u64(word);
    detail::write_params(w, l.params);
  }
  const Classifier& c = m.classifier;
  w.u8(static_cast<std::uint8_t>(BlockKind::classifier));
  w.u8(0);
  w.u8(0);
  w.u8(0);
  w.u16(static_cast<std::uint16_t>(c.in_features));
  w.u16(static_cast<std::uint16_t>(c.classes));
  w.u16(1);
  w.u16(1);
  for (auto v : c.weights) w.u8(static_cast<std::uint8_t>(v));
  for (auto v : c.bias) w.i32(v);
  const std::uint32_t crc = crc32_ieee(w.bytes());
  w.u32(crc);
  return std::move(w.bytes());
}

// Parses and fully validates a model; every failure is a ModelFileError.
inline Model load_model(std::span<const std::uint8_t> bytes) {
  using Code = ModelFileError::Code;
  if (bytes.size() < kModelHeaderBytes + 4)
    throw ModelFileError(Code::truncated, bytes.size(), -1, "file shorter than header");
  if (std::memcmp(bytes.data(), "FBNN", 4) != 0)
    throw ModelFileError(Code::bad_magic, 0, -1, "expected \"FBNN\"");

  detail::ByteReader r(bytes, bytes.size() - 4);
  r.u32();
  Model m;
  m.version = r.u16();
  if (m.version != kModelVersion)
    throw ModelFileError(Code::unsupported_version, 4, -1, "version " + std::to_string(m.version));
  m.topology = r.u16();
  if (m.topology != kTopologyResNet20)
    throw ModelFileError(Code::unknown_topology, 6, -1, "tag " + std::to_string(m.topology));
  m.resolution = r.u8();
  if (m.resolution == 0)
    throw ModelFileError(Code::invalid_param, 8, -1, "thermometer resolution 0");
  const std::uint8_t pad_mode = r.u8();
  if (pad_mode != kPaddingZeroContribution)
    throw ModelFileError(Code::invalid_param, 9, -1,
                         "padding mode " + std::to_string(pad_mode));
  m.classes = r.u16();
  const std::size_t layer_count = r.u16();
  if (r.u16() != 0) throw ModelFileError(Code::invalid_param, 14, -1, "reserved field nonzero");

  const NetworkSpec net = network_for(m.topology, m.resolution, m.classes);
  std::vector<const BlockSpec*> layer_specs;
  for (const auto& b : net.blocks)
    if (is_conv(b.kind) || b.kind == BlockKind::classifier) layer_specs.push_back(&b);
  if (layer_count != layer_specs.size())
    throw ModelFileError(Code::shape_mismatch, 12, -1,
                         "topology needs " + std::to_string(layer_specs.size()) +
                             " layers, file declares " + std::to_string(layer_count));

  for (std::size_t li = 0; li < layer_count; ++li) {
    r.set_layer(static_cast<long>(li));
    const std::size_t record_start = r.offset();
    r.need(kLayerHeaderBytes, "layer header");
    const auto kind = static_cast<BlockKind>(r.u8());
    const std::size_t k = r.u8(), stride = r.u8(), pad = r.u8();
    const std::size_t in_ch = r.u16(), out_ch = r.u16(), in_h = r.u16(), in_w = r.u16();
    const BlockSpec& spec = *layer_specs[li];
    const bool shape_ok = kind == spec.kind && in_ch == spec.in_channels &&
                          out_ch == spec.out_channels && in_h == spec.in_height &&
                          in_w == spec.in_width &&
                          (kind == BlockKind::classifier ||
                           ConvGeometry{k, stride, pad} == spec.geometry);
    if (!shape_ok)
      throw ModelFileError(Code::shape_mismatch, record_start, static_cast<long>(li),
                           "record does not compose with topology at " + spec.name);
    if (kind == BlockKind::classifier) {
      Classifier& c = m.classifier;
      c.in_features = in_ch;
      c.classes = out_ch;
      r.need(in_ch * out_ch + 4 * out_ch, "classifier payload");
      c.weights.resize(in_ch * out_ch);
      for (auto& v : c.weights) v = static_cast<std::int8_t>(r.u8());
      c.bias.resize(out_ch);
      for (auto& v : c.bias) v = r.i32();
      continue;
    }
    ConvLayer l;
    l.kind = kind;
    l.in_channels = in_ch;
    l.out_channels = out_ch;
    l.in_height = in_h;
    l.in_width = in_w;
    l.geometry = {k, stride, pad};
    const Dims wd{in_ch, k, k};
    const std::size_t words = wd.positions() * words_for(in_ch);
    r.need(out_ch * (8 * words + 7 * 4), "weights and channel params");
    l.weights.reserve(out_ch);
    for (std::size_t o = 0; o < out_ch; ++o) {
      const std::size_t at = r.offset();
      std::vector<std::uint64_t> ws(words);
      for (auto& x : ws) x = r.u64();
      PackedBitPlane plane(wd, std::move(ws));
      if (!plane.padding_clear())
        throw ModelFileError(Code::nonzero_padding, at, static_cast<long>(li),
                             "weight plane for output channel " + std::to_string(o));
      l.weights.push_back(std::move(plane));
    }
    l.params = ChannelParams(out_ch);
    for (auto* v : {&l.params.delta, &l.params.bn_scale, &l.params.bn_bias, &l.params.alpha,
                    &l.params.beta, &l.params.gamma, &l.params.act_scale})
      for (auto& x : *v) x = r.i32();
    for (std::size_t o = 0; o < out_ch; ++o)
      if (l.params.act_scale[o] <= 0)
        throw ModelFileError(Code::invalid_param, record_start, static_cast<long>(li),
                             "act_scale[" + std::to_string(o) + "] not positive");
    m.convs.push_back(std::move(l));
  }
  if (r.remaining() != 0)
    throw ModelFileError(Code::trailing_bytes, r.offset(), -1,
                         std::to_string(r.remaining()) + " unexpected bytes before CRC");
  const std::size_t crc_at = bytes.size() - 4;
  const std::uint32_t stored = static_cast<std::uint32_t>(bytes[crc_at]) |
                               static_cast<std::uint32_t>(bytes[crc_at + 1]) << 8 |
                               static_cast<std::uint32_t>(bytes[crc_at + 2]) << 16 |
                               static_cast<std::uint32_t>(bytes[crc_at + 3]) << 24;
  if (stored != crc32_ieee(bytes.first(crc_at)))
    throw ModelFileError(Code::crc_mismatch, crc_at, -1, "payload checksum differs");
  return m;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::ios_base::failure("write failed for " + path);
}

inline Model load_model_file(const std::string& path) { return load_model(read_file_bytes(path)); }

}  // namespace fracbnn
