#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace fpath::detail {

// FPATH_THREADS overrides the worker count; 1 forces serial execution.
inline unsigned worker_count(size_t n) {
  unsigned w = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FPATH_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) w = static_cast<unsigned>(v);
  }
  return static_cast<unsigned>(std::min<size_t>(w, std::max<size_t>(n, 1)));
}

// Runs body(i) for i in [0, n) across threads. Each index is handled exactly
// once and callers write results into slot i, so output order never depends on
// scheduling. If several indices throw, the lowest index's exception wins.
template <typename Body>
void parallel_for(size_t n, Body&& body) {
  const unsigned workers = worker_count(n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<size_t> error_index(workers, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      // Contiguous chunks: worker w owns [w*n/W, (w+1)*n/W).
      const size_t lo = n * w / workers, hi = n * (w + 1) / workers;
      for (size_t i = lo; i < hi; ++i) {
        try {
          body(i);
        } catch (...) {
          errors[w] = std::current_exception();
          error_index[w] = i;
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (unsigned w = 0; w < workers; ++w) {
    if (errors[w]) std::rethrow_exception(errors[w]);  // chunks are ordered
  }
}

}  // namespace fpath::detail
