#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace dpmine::runner {

inline unsigned resolve_workers(long requested) {
  if (requested > 0) return static_cast<unsigned>(requested);
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Tasks are
/// independent; an exception in one task is captured in its slot and the
/// remaining tasks still run.
template <typename Fn>
std::vector<std::exception_ptr> parallel_for(std::size_t count, unsigned workers, Fn &&fn) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto drain = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n = std::min<std::size_t>(std::max(1u, workers), count);
  if (n <= 1) {
    drain();
    return errors;
  }
  std::vector<std::thread> threads;
  threads.reserve(n);
  for (unsigned k = 0; k < n; ++k) threads.emplace_back(drain);
  for (auto &t : threads) t.join();
  return errors;
}

} // namespace dpmine::runner
