// Copyright (c) 2026 expdate authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace expdate {
namespace detail {

template <class... Args>
std::string cat(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

inline std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

/// Number of worker threads used by data generation and batched kernels.
/// Overridable with the EXPDATE_THREADS environment variable.
inline unsigned max_threads() {
  static const unsigned n = [] {
    if (const char* env = std::getenv("EXPDATE_THREADS")) {
      long v = std::atol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
  }();
  return n;
}

/// Runs fn(begin, end) over [0, n) split into fixed-size chunks.
/// Chunk boundaries depend only on n and grain, never on the thread count,
/// so any result written to disjoint ranges is bitwise reproducible.
template <class Fn>
void parallel_for(std::size_t n, std::size_t grain, Fn&& fn, std::size_t jobs = 0) {
  if (n == 0) return;
  unsigned workers = jobs ? static_cast<unsigned>(jobs) : max_threads();
  if (workers <= 1 || n <= grain) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::size_t chunks = (n + grain - 1) / grain;
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (;;) {
      std::size_t c = next.fetch_add(1);
      if (c >= chunks) break;
      std::size_t b = c * grain;
      std::size_t e = b + grain < n ? b + grain : n;
      fn(b, e);
    }
  };
  std::vector<std::thread> pool;
  unsigned spawn = workers - 1 < chunks - 1 ? workers - 1 : static_cast<unsigned>(chunks - 1);
  pool.reserve(spawn);
  for (unsigned i = 0; i < spawn; ++i) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
}

}  // namespace detail
}  // namespace expdate
