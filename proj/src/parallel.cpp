#include "infodesign/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace infodesign {

namespace {

int default_threads() {
  if (const char* env = std::getenv("INFODESIGN_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (...) {
    }
  }
  return 1;
}

std::atomic<int>& threads() {
  static std::atomic<int> n{default_threads()};
  return n;
}

}  // namespace

int thread_count() { return threads().load(std::memory_order_relaxed); }

void set_thread_count(int n) { threads().store(n < 1 ? 1 : n, std::memory_order_relaxed); }

}  // namespace infodesign
