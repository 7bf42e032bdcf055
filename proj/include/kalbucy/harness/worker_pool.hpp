#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace kalbucy::harness {

// Runs task(i) for i in [0, count) on up to `workers` threads. Tasks must
// only write to their own slot; callers reduce results in index order, so
// output never depends on scheduling. The exception from the lowest failing
// index is rethrown after all threads have joined.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& task);

template <typename T, typename F>
std::vector<T> parallel_map(std::size_t count, int workers, F&& fn) {
  std::vector<T> out(count);
  parallel_for(count, workers, [&](std::size_t i) { out[i] = fn(i); });
  return out;
}

}  // namespace kalbucy::harness
