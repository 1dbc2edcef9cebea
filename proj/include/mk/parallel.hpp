#pragma once

#include <cstddef>

namespace mk {

/// Caps the number of OpenMP workers; values < 1 restore the default.
void set_thread_limit(int n);
int thread_limit();

/// Fixed partition size for deterministic reductions: partial sums are
/// formed over blocks of this many items and combined in block order, so
/// results do not depend on the number of threads.
inline constexpr std::size_t kReductionBlock = 4096;

inline std::size_t block_count(std::size_t n) { return (n + kReductionBlock - 1) / kReductionBlock; }

}  // namespace mk
