#pragma once

#include <cctype>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fracbnn/bitpack.hpp"
#include "fracbnn/image.hpp"

namespace fracbnn {

class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Binary PPM (P6) with maxval 255.
inline Image parse_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos;
    std::uint64_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 65535) throw FormatError(std::string("PPM ") + what + " too large", start);
      ++pos;
    }
    if (pos == start) throw FormatError(std::string("PPM: expected ") + what, start);
    return static_cast<std::size_t>(v);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    throw FormatError("PPM: missing P6 magic", 0);
  pos = 2;
  const std::size_t width = read_uint("width");
  const std::size_t height = read_uint("height");
  const std::size_t maxval_at = pos;
  const std::size_t maxval = read_uint("maxval");
  if (maxval != 255)
    throw FormatError("PPM: maxval " + std::to_string(maxval) + " unsupported (need 255)", maxval_at);
  if (width == 0 || height == 0) throw FormatError("PPM: empty image", maxval_at);
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    throw FormatError("PPM: expected whitespace before raster", pos);
  ++pos;
  const std::size_t need = width * height * 3;
  if (bytes.size() - pos < need)
    throw FormatError("PPM: raster truncated, need " + std::to_string(need) + " bytes", pos);
  if (bytes.size() - pos > need) throw FormatError("PPM: trailing bytes after raster", pos + need);
  return Image(height, width,
               std::vector<std::uint8_t>(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                         bytes.end()));
}

inline std::vector<std::uint8_t> write_ppm(const Image& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

// Packed tensor file: "FBTN", then C, H, W as little-endian u32, then the
// plane's words as little-endian u64.
inline std::vector<std::uint8_t> write_tensor(const PackedBitPlane& p) {
  std::vector<std::uint8_t> out{'F', 'B', 'T', 'N'};
  auto put = [&](std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put(p.channels(), 4);
  put(p.height(), 4);
  put(p.width(), 4);
  for (auto w : p.words()) put(w, 8);
  return out;
}

inline PackedBitPlane read_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || bytes[0] != 'F' || bytes[1] != 'B' || bytes[2] != 'T' || bytes[3] != 'N')
    throw FormatError("tensor file: missing FBTN header", 0);
  auto get = [&](std::size_t at, int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{bytes[at + i]} << (8 * i);
    return v;
  };
  const Dims d{get(4, 4), get(8, 4), get(12, 4)};
  const std::size_t words = d.positions() * words_for(d.channels);
  if (bytes.size() != 16 + 8 * words)
    throw FormatError("tensor file: payload size does not match dims " + to_string(d), 16);
  std::vector<std::uint64_t> ws(words);
  for (std::size_t i = 0; i < words; ++i) ws[i] = get(16 + 8 * i, 8);
  PackedBitPlane p(d, std::move(ws));
  if (!p.padding_clear()) throw FormatError("tensor file: nonzero padding lanes", 16);
  return p;
}

}  // namespace fracbnn
