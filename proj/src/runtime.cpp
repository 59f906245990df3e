#include "nsf/runtime.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

#include <Eigen/Core>

namespace nsf::runtime {

namespace {

int initial_threads() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("NSF_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

std::atomic<int> g_threads{initial_threads()};
std::atomic<bool> g_deterministic{false};

}  // namespace

int threads() { return g_deterministic.load() ? 1 : g_threads.load(); }

void set_threads(int n) {
  g_threads.store(std::max(1, n));
  Eigen::setNbThreads(threads());
}

bool deterministic() { return g_deterministic.load(); }

void set_deterministic(bool on) {
  g_deterministic.store(on);
  Eigen::setNbThreads(threads());
}

}  // namespace nsf::runtime
