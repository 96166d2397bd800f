#pragma once

#include <atomic>
#include <cstdint>

namespace driftlab {

/// Process-wide work counters. Network evaluations are counted per sample
/// vector; kernel evaluations per kernel_eval call (pairs).
struct WorkCounters {
  std::atomic<std::uint64_t> net_evals{0};
  std::atomic<std::uint64_t> kernel_evals{0};

  void reset() noexcept {
    net_evals = 0;
    kernel_evals = 0;
  }
};

WorkCounters& counters() noexcept;

}  // namespace driftlab
