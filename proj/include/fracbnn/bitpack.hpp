#pragma once

#include <bit>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fracbnn {

// Channel-major tensor shape (C, H, W).
struct Dims {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t positions() const { return height * width; }
  std::size_t volume() const { return channels * height * width; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

inline std::string to_string(const Dims& d) {
  return std::to_string(d.channels) + "x" + std::to_string(d.height) + "x" +
         std::to_string(d.width);
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr std::size_t kLanesPerWord = 64;

inline constexpr std::size_t words_for(std::size_t channels) {
  return (channels + kLanesPerWord - 1) / kLanesPerWord;
}

// Mask selecting the low `valid` lanes of a word; valid in [1, 64].
inline constexpr std::uint64_t lane_mask(std::size_t valid) {
  return valid >= kLanesPerWord ? ~std::uint64_t{0}
                                : (std::uint64_t{1} << valid) - 1;
}

// Bipolar {-1,+1} tensor packed 64 channels per word.
//
// At every spatial position (h, w) the channels occupy ceil(C/64)
// consecutive words; word k holds channels [64k, 64k+64) LSB-first.
// Bit 1 is +1, bit 0 is -1. Lanes past C in the last word are always 0,
// which lets the dot product skip masking entirely (0 XOR 0 contributes
// nothing to the mismatch count).
class PackedBitPlane {
 public:
  PackedBitPlane() = default;

  // All lanes -1.
  explicit PackedBitPlane(Dims dims)
      : dims_(dims),
        words_per_position_(words_for(dims.channels)),
        words_(dims.positions() * words_per_position_, 0) {}

  PackedBitPlane(Dims dims, std::vector<std::uint64_t> words)
      : dims_(dims),
        words_per_position_(words_for(dims.channels)),
        words_(std::move(words)) {
    if (words_.size() != dims.positions() * words_per_position_)
      throw ShapeError("packed word count " + std::to_string(words_.size()) +
                       " does not match dims " + to_string(dims));
  }

  const Dims& dims() const { return dims_; }
  std::size_t channels() const { return dims_.channels; }
  std::size_t height() const { return dims_.height; }
  std::size_t width() const { return dims_.width; }
  std::size_t words_per_position() const { return words_per_position_; }

  std::span<const std::uint64_t> words() const { return words_; }
  std::span<std::uint64_t> mutable_words() { return words_; }

  std::span<const std::uint64_t> at(std::size_t h, std::size_t w) const {
    return {words_.data() + (h * dims_.width + w) * words_per_position_,
            words_per_position_};
  }

  bool bit(std::size_t c, std::size_t h, std::size_t w) const {
    return (at(h, w)[c / kLanesPerWord] >> (c % kLanesPerWord)) & 1u;
  }

  int value(std::size_t c, std::size_t h, std::size_t w) const {
    return bit(c, h, w) ? 1 : -1;
  }

  void set(std::size_t c, std::size_t h, std::size_t w, bool plus_one) {
    auto& word = words_[(h * dims_.width + w) * words_per_position_ +
                        c / kLanesPerWord];
    const std::uint64_t m = std::uint64_t{1} << (c % kLanesPerWord);
    word = plus_one ? (word | m) : (word & ~m);
  }

  // True when every lane past `channels` is zero.
  bool padding_clear() const {
    const std::size_t tail = dims_.channels % kLanesPerWord;
    if (tail == 0 || words_per_position_ == 0) return true;
    const std::uint64_t pad = ~lane_mask(tail);
    for (std::size_t p = 0; p < dims_.positions(); ++p)
      if (words_[p * words_per_position_ + words_per_position_ - 1] & pad)
        return false;
    return true;
  }

  friend bool operator==(const PackedBitPlane&, const PackedBitPlane&) = default;

 private:
  Dims dims_{};
  std::size_t words_per_position_ = 0;
  std::vector<std::uint64_t> words_;
};

// Packs a CHW-ordered bipolar tensor.
inline PackedBitPlane pack(std::span<const std::int8_t> values, Dims dims) {
  if (values.size() != dims.volume())
    throw ShapeError("pack: " + std::to_string(values.size()) +
                     " values for dims " + to_string(dims));
  PackedBitPlane plane(dims);
  const std::size_t hw = dims.positions();
  for (std::size_t c = 0; c < dims.channels; ++c) {
    for (std::size_t p = 0; p < hw; ++p) {
      const std::int8_t v = values[c * hw + p];
      if (v != 1 && v != -1)
        throw std::invalid_argument("pack: element " +
                                    std::to_string(c * hw + p) +
                                    " is not bipolar (" + std::to_string(v) +
                                    ")");
      if (v == 1) plane.set(c, p / dims.width, p % dims.width, true);
    }
  }
  return plane;
}

// CHW-ordered bipolar values.
inline std::vector<std::int8_t> unpack(const PackedBitPlane& plane) {
  const Dims& d = plane.dims();
  std::vector<std::int8_t> out(d.volume());
  const std::size_t hw = d.positions();
  for (std::size_t c = 0; c < d.channels; ++c)
    for (std::size_t p = 0; p < hw; ++p)
      out[c * hw + p] =
          static_cast<std::int8_t>(plane.value(c, p / d.width, p % d.width));
  return out;
}

// Bipolar dot product of the low `valid` lanes of two words.
inline int dot_words(std::uint64_t a, std::uint64_t b, std::size_t valid) {
  assert(valid >= 1 && valid <= kLanesPerWord);
  assert(((a | b) & ~lane_mask(valid)) == 0);
  const int matches = std::popcount(~(a ^ b) & lane_mask(valid));
  return 2 * matches - static_cast<int>(valid);
}

// Bipolar dot product over `channels` lanes of two word runs whose
// padding lanes are zero.
inline int dot_word_run(const std::uint64_t* a, const std::uint64_t* b,
                        std::size_t nwords, std::size_t channels) {
  int mismatches = 0;
  for (std::size_t i = 0; i < nwords; ++i) mismatches += std::popcount(a[i] ^ b[i]);
  return static_cast<int>(channels) - 2 * mismatches;
}

// Channel dot product between x at (xh, xw) and w at (wh, ww).
inline int dot_planes_at(const PackedBitPlane& x, std::size_t xh,
                         std::size_t xw, const PackedBitPlane& w,
                         std::size_t wh, std::size_t ww) {
  if (x.channels() != w.channels())
    throw ShapeError("dot_planes_at: channel mismatch " +
                     std::to_string(x.channels()) + " vs " +
                     std::to_string(w.channels()));
  if (xh >= x.height() || xw >= x.width() || wh >= w.height() ||
      ww >= w.width())
    throw ShapeError("dot_planes_at: position out of range");
  return dot_word_run(x.at(xh, xw).data(), w.at(wh, ww).data(),
                      x.words_per_position(), x.channels());
}

inline int dot_planes_at(const PackedBitPlane& x, const PackedBitPlane& w,
                         std::size_t h, std::size_t wpos) {
  return dot_planes_at(x, h, wpos, w, h, wpos);
}

}  // namespace fracbnn
