// Minimal shared-memory loop parallelism.
#pragma once

#include <cstdint>
#include <functional>

#include "hodbf/types.hpp"

namespace hodbf {

/// Worker count: HODBF_NUM_THREADS if set, else the hardware concurrency.
int worker_count();
/// Overrides the worker count for the current process (0 restores the default).
void set_worker_count(int n);

/// Calls f(i) for i in [0, n); iterations may run concurrently.
void parallel_for(Index n, const std::function<void(Index)>& f);

/// Stateless 64-bit mixing used to derive reproducible per-task seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace hodbf
