#pragma once

// Spawn-and-join parallel loop for independent per-index work. The worker
// count comes from MIA_FORGE_THREADS (default 1, fully serial). Tasks must
// confine writes to caller-owned per-index slots so results do not depend on
// execution order; the lowest-index exception is rethrown, which keeps
// failures deterministic as well.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <stdexcept>
#include <thread>
#include <vector>

namespace miaforge {

inline int thread_budget() {
  const char* env = std::getenv("MIA_FORGE_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 1)
    throw std::runtime_error("MIA_FORGE_THREADS must be a positive integer");
  return static_cast<int>(v);
}

inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         int budget = thread_budget()) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(budget < 1 ? 1 : budget));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(work);
  for (auto& t : threads) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace miaforge
