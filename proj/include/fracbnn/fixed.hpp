#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>

// Q16.16 signed fixed point stored in int32.
namespace fracbnn::q16 {

inline constexpr int kFracBits = 16;
inline constexpr std::int32_t kOne = 1 << kFracBits;

inline constexpr std::int32_t kMax = std::numeric_limits<std::int32_t>::max();
inline constexpr std::int32_t kMin = std::numeric_limits<std::int32_t>::min();

// Saturation events observed by a kernel run.
struct Diagnostics {
  std::atomic<std::uint64_t> saturations{0};
  void note_saturation() { saturations.fetch_add(1, std::memory_order_relaxed); }
};

inline std::int32_t saturate(std::int64_t v, Diagnostics* diag = nullptr) {
  if (v > kMax) {
    if (diag) diag->note_saturation();
    return kMax;
  }
  if (v < kMin) {
    if (diag) diag->note_saturation();
    return kMin;
  }
  return static_cast<std::int32_t>(v);
}

// v / 2^shift rounded to nearest, ties to even.
inline std::int64_t shift_round_even(std::int64_t v, int shift) {
  const std::int64_t floor = v >> shift;  // arithmetic
  const std::int64_t rem = v - (floor << shift);
  const std::int64_t half = std::int64_t{1} << (shift - 1);
  if (rem > half || (rem == half && (floor & 1))) return floor + 1;
  return floor;
}

// num / den rounded to nearest, ties to even; den > 0.
inline std::int64_t div_round_even(std::int64_t num, std::int64_t den) {
  std::int64_t q = num / den;
  std::int64_t r = num % den;
  if (r < 0) {
    r += den;
    --q;
  }
  if (2 * r > den || (2 * r == den && (q & 1))) ++q;
  return q;
}

inline std::int32_t mul(std::int32_t a, std::int32_t b,
                        Diagnostics* diag = nullptr) {
  return saturate(shift_round_even(std::int64_t{a} * b, kFracBits), diag);
}

inline std::int32_t add(std::int32_t a, std::int32_t b,
                        Diagnostics* diag = nullptr) {
  return saturate(std::int64_t{a} + b, diag);
}

inline std::int32_t from_int(std::int64_t v, Diagnostics* diag = nullptr) {
  return saturate(v * kOne, diag);
}

// Nearest representable value; used only for parameter generation and I/O.
inline std::int32_t from_double(double v) {
  return saturate(static_cast<std::int64_t>(std::nearbyint(v * kOne)));
}

inline double to_double(std::int32_t raw) { return static_cast<double>(raw) / kOne; }

}  // namespace fracbnn::q16
