#include "vsrhe/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace vsrhe {
namespace {

std::size_t threads_from_env() {
  if (const char* env = std::getenv("VSRHE_THREADS")) {
    try {
      long n = std::stol(env);
      if (n > 0) return static_cast<std::size_t>(n);
    } catch (...) {
    }
  }
  return 1;
}

std::atomic<std::size_t>& thread_setting() {
  static std::atomic<std::size_t> n{threads_from_env()};
  return n;
}

}  // namespace

void set_num_threads(std::size_t n) { thread_setting().store(std::max<std::size_t>(n, 1)); }

std::size_t num_threads() { return thread_setting().load(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk) {
  if (n == 0) return;
  std::size_t workers = std::min(num_threads(), (n + min_chunk - 1) / std::max<std::size_t>(min_chunk, 1));
  if (workers <= 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers - 1);
  std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    std::size_t begin = w * chunk;
    std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, w, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  try {
    body(0, std::min(n, chunk));
  } catch (...) {
    errors[0] = std::current_exception();
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace vsrhe
