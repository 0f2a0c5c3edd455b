#include "mfce/parallel.hpp"

#include <cstdlib>

namespace mfce {

namespace {
int g_workers = []() {
  if (const char* env = std::getenv("MFCE_WORKERS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}();
}  // namespace

int num_workers() { return g_workers; }

void set_num_workers(int n) { g_workers = n < 1 ? 1 : n; }

}  // namespace mfce
