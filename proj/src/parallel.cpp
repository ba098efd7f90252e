#include "cvhssr/parallel.hpp"

#include <atomic>

namespace cvh {

namespace {
std::atomic<unsigned> g_threads{1};
}

void set_num_threads(unsigned count) { g_threads.store(count == 0 ? 1 : count); }

unsigned num_threads() { return g_threads.load(); }

} // namespace cvh
