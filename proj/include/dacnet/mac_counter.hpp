#pragma once

#include <cstdint>

namespace dacnet {

// Instrumented multiply-accumulate counter. Kernels report the number of
// multiply-adds their loops actually executed; the count only accumulates
// while a MacCounterScope is alive.
class MacCounterScope {
 public:
  MacCounterScope();
  ~MacCounterScope();
  MacCounterScope(const MacCounterScope&) = delete;
  MacCounterScope& operator=(const MacCounterScope&) = delete;

  std::uint64_t count() const;

 private:
  std::uint64_t start_;
};

void report_macs(std::uint64_t n);

}  // namespace dacnet
