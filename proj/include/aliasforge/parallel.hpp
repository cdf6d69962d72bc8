#pragma once

#include <cstddef>
#include <functional>

namespace aliasforge {

/// Worker count: hardware concurrency capped by ALIAS_FORGE_THREADS when set.
std::size_t worker_count();

/// Runs body(i) for i in [0, n) across worker_count() threads. Each index is
/// processed exactly once; callers write results into per-index slots so the
/// outcome is independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace aliasforge
