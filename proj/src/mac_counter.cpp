#include "dacnet/mac_counter.hpp"

#include <atomic>

namespace dacnet {

namespace {
std::atomic<int> g_active{0};
std::atomic<std::uint64_t> g_total{0};
}  // namespace

MacCounterScope::MacCounterScope() : start_(g_total.load()) { g_active.fetch_add(1); }

MacCounterScope::~MacCounterScope() { g_active.fetch_sub(1); }

std::uint64_t MacCounterScope::count() const { return g_total.load() - start_; }

void report_macs(std::uint64_t n) {
  if (g_active.load(std::memory_order_relaxed) > 0) g_total.fetch_add(n, std::memory_order_relaxed);
}

}  // namespace dacnet
