#pragma once

#include <cstddef>
#include <functional>

namespace specsplat {

// Number of workers used by parallel_chunks. Resolved once from
// SPECSPLAT_THREADS (clamped to [1, hardware_concurrency]); tests can
// override explicitly.
int worker_count();
void set_worker_count(int n);

// Runs fn(chunk_index, begin, end) over [0, n) split into fixed-size chunks.
// Chunk boundaries depend only on n and chunk_size, never on the worker
// count, so per-chunk outputs reduced in chunk order are bit-reproducible
// for any number of workers. fn must not touch state shared across chunks.
// If fn throws, the first exception propagates to the caller after all
// workers have stopped.
void parallel_chunks(std::size_t n, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace specsplat
