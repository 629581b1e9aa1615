// Copyright 2026 the gaussflow authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GAUSSFLOW_PARALLEL_HPP
#define GAUSSFLOW_PARALLEL_HPP

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace gaussflow {

/// Number of worker threads to use. The GAUSSFLOW_THREADS environment
/// variable overrides hardware concurrency; it is re-read on every call so
/// tests can toggle it at runtime.
inline int thread_count() {
  if (const char* env = std::getenv("GAUSSFLOW_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1 && v <= 4096) {
      return static_cast<int>(v);
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs body(i) for i in [0, n) across thread_count() threads with dynamic
/// index dispatch. Each index must touch only its own outputs (and draw from
/// its own random stream), so results are identical for any thread count or
/// schedule. The first exception thrown by any body is rethrown to the
/// caller after all threads join.
template <typename Fn>
void parallel_for(int n, Fn&& body) {
  if (n <= 0) return;
  const int threads = std::min(thread_count(), n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) {
      body(i);
    }
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back(worker);
  }
  for (auto& th : pool) {
    th.join();
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace gaussflow

#endif  // GAUSSFLOW_PARALLEL_HPP
