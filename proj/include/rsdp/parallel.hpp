#pragma once
#include <cstdint>
#include <functional>

namespace rsdp {

// Runs fn(index) for index in [0, count) across `workers` threads.  Work items
// must write only into per-index slots; callers reduce the slots sequentially
// in index order afterwards, so results never depend on the worker count.
void parallel_for(int64_t count, int workers, const std::function<void(int64_t)>& fn);

int default_workers();

}  // namespace rsdp
