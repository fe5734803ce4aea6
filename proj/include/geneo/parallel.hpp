// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace geneo {

namespace detail {
inline std::size_t& requested_threads() {
  static std::size_t n = 0;
  return n;
}
inline bool& inside_parallel_region() {
  thread_local bool inside = false;
  return inside;
}
}  // namespace detail

/// 0 selects std::thread::hardware_concurrency().
inline void set_thread_count(std::size_t n) { detail::requested_threads() = n; }

inline std::size_t thread_count() {
  const std::size_t n = detail::requested_threads();
  if (n != 0) return n;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [begin, end) split into contiguous chunks.
///
/// Callers must make iterations write disjoint memory; results are then
/// independent of the schedule. Nested calls run serially on the calling
/// thread.
template <typename Fn>
void parallel_for(std::size_t begin, std::size_t end, Fn&& fn) {
  if (end <= begin) return;
  const std::size_t count = end - begin;
  const std::size_t workers = std::min(thread_count(), count);
  if (workers <= 1 || detail::inside_parallel_region()) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = begin + count * w / workers;
    const std::size_t hi = begin + count * (w + 1) / workers;
    threads.emplace_back([&, lo, hi, w] {
      detail::inside_parallel_region() = true;
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
      detail::inside_parallel_region() = false;
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace geneo
