#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

#include "fracbnn/fixed.hpp"

namespace fracbnn {

// Execution settings shared by all kernels. Results never depend on
// `threads`: every output element is produced by exactly one task with
// integer arithmetic only.
struct ExecContext {
  int threads = 1;
  q16::Diagnostics* diagnostics = nullptr;
};

// Runs body(begin, end) over contiguous chunks of [0, n).
template <typename Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
  const std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    if (n) body(std::size_t{0}, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
}

}  // namespace fracbnn
