#pragma once

#include <cstdint>
#include <functional>

namespace meshsplat {

/// Number of worker threads used by parallel_for. Defaults to the hardware
/// concurrency; override with MESHSPLAT_THREADS (0 or 1 forces sequential).
int worker_count();

/// Runs fn(i) for i in [0, n). Work is split into fixed-size chunks claimed by
/// an atomic counter, so any partitioning of outputs by index is race-free and
/// results never depend on the thread count or schedule.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

/// Runs fn(chunk_index, begin, end) over fixed chunks of [0, n). The chunk
/// decomposition depends only on n and chunk_size, never on the thread count,
/// so per-chunk partial results can be reduced in chunk order deterministically.
void parallel_chunks(std::int64_t n, std::int64_t chunk_size,
                     const std::function<void(int, std::int64_t, std::int64_t)>& fn);

/// Number of chunks parallel_chunks will produce for the given sizes.
int chunk_count(std::int64_t n, std::int64_t chunk_size);

}  // namespace meshsplat
