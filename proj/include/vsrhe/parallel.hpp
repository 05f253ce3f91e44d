#pragma once

#include <cstddef>
#include <functional>

namespace vsrhe {

// Process-wide worker count used by the kernels. Defaults to VSRHE_THREADS
// when set, otherwise 1.
void set_num_threads(std::size_t n);
std::size_t num_threads();

// Splits [0, n) into contiguous chunks, one per worker. Each index is visited
// by exactly one worker, so results never depend on the worker count as long
// as the body writes only to locations owned by its indices.
void parallel_for(std::size_t n, const std::function<void(std::size_t begin, std::size_t end)>& body,
                  std::size_t min_chunk = 1);

}  // namespace vsrhe
