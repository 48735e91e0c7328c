#pragma once

#include <cstdint>
#include <vector>

#include "fracbnn/bitpack.hpp"

namespace fracbnn {

// Dense CHW feature map. Tag keeps integer accumulators and Q16.16 maps
// from being mixed up.
template <typename T, typename Tag>
struct FeatureMap {
  Dims dims{};
  std::vector<T> values;

  FeatureMap() = default;
  explicit FeatureMap(Dims d, T fill = T{}) : dims(d), values(d.volume(), fill) {}
  FeatureMap(Dims d, std::vector<T> v) : dims(d), values(std::move(v)) {
    if (values.size() != dims.volume())
      throw ShapeError("feature map: " + std::to_string(values.size()) +
                       " values for dims " + to_string(dims));
  }

  T& at(std::size_t c, std::size_t h, std::size_t w) {
    return values[(c * dims.height + h) * dims.width + w];
  }
  const T& at(std::size_t c, std::size_t h, std::size_t w) const {
    return values[(c * dims.height + h) * dims.width + w];
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

struct IntTag {};
struct FixedTag {};

// Integer accumulators straight out of a convolution.
using IntFeatureMap = FeatureMap<std::int32_t, IntTag>;
// Q16.16 raw values.
using FixedFeatureMap = FeatureMap<std::int32_t, FixedTag>;

}  // namespace fracbnn
