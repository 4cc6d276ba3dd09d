#include "rotpool/parallel.hpp"

#include <tbb/blocked_range.h>
#include <tbb/info.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>

namespace rotpool {

int worker_count() {
  const int cores = tbb::info::default_concurrency();
  const char* env = std::getenv("ROTPOOL_THREADS");
  if (env == nullptr || *env == '\0') return cores;
  char* end = nullptr;
  const long value = std::strtol(env, &end, 10);
  if (*end != '\0' || value <= 0) return cores;
  return static_cast<int>(value < cores ? value : cores);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  if (n == 0) return;
  std::exception_ptr first_error;
  std::size_t first_index = n;
  std::mutex lock;
  auto run = [&](std::size_t i) {
    try {
      body(i);
    } catch (...) {
      std::lock_guard<std::mutex> guard(lock);
      // Keep the lowest failing index so the reported error does not depend on scheduling.
      if (i < first_index) {
        first_index = i;
        first_error = std::current_exception();
      }
    }
  };
  const int workers = worker_count();
  if (workers <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    tbb::task_arena arena(workers);
    arena.execute([&] {
      tbb::parallel_for(tbb::blocked_range<std::size_t>(0, n), [&](const auto& range) {
        for (std::size_t i = range.begin(); i != range.end(); ++i) run(i);
      });
    });
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace rotpool
