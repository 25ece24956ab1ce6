#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ssdr {

namespace detail {
inline std::atomic<std::size_t>& thread_setting() {
  static std::atomic<std::size_t> n{1};
  return n;
}
inline thread_local bool in_worker = false;
}  // namespace detail

inline void set_num_threads(std::size_t n) { detail::thread_setting() = std::max<std::size_t>(1, n); }
inline std::size_t num_threads() { return detail::thread_setting(); }

/// Runs f(i) for i in [0, n). Work items are claimed dynamically, so every
/// item must write only to its own outputs; results then do not depend on
/// the thread count. Nested calls from inside a worker run serially.
template <class F>
void parallel_for(std::size_t n, F&& f) {
  const std::size_t workers = detail::in_worker ? 1 : std::min(num_threads(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    detail::in_worker = true;
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
    detail::in_worker = false;
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(body);
    body();
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace ssdr
