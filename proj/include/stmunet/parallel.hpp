/*
 * Copyright 2026 the stmunet authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace stmunet {

/// Worker cap, resolved once: STMU_THREADS if set, else hardware concurrency
/// clamped to 8. Always >= 1.
inline int max_threads() {
  static const int cached = [] {
    if (const char* env = std::getenv("STMU_THREADS")) {
      const int v = std::atoi(env);
      if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::clamp(hw, 1u, 8u));
  }();
  return cached;
}

/// Runs body(begin, end) over a static contiguous partition of [0, n).
/// Each index is owned by exactly one worker, so writes to disjoint
/// per-index outputs stay deterministic. `grain` is the minimum number of
/// indices that justifies one extra thread.
template <typename F>
void parallel_for(int64_t n, int64_t grain, F&& body) {
  if (n <= 0) return;
  const int64_t want = grain > 0 ? n / grain : n;
  const int threads = static_cast<int>(std::clamp<int64_t>(want, 1, max_threads()));
  if (threads == 1) {
    body(int64_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads - 1));
  const int64_t chunk = (n + threads - 1) / threads;
  for (int t = 1; t < threads; ++t) {
    const int64_t b = t * chunk;
    const int64_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&body, b, e] { body(b, e); });
  }
  body(int64_t{0}, std::min(n, chunk));
  for (auto& th : pool) th.join();
}

}  // namespace stmunet
