#pragma once

#include <cstddef>
#include <functional>

namespace seelab {

// Worker count used by all path-parallel loops. Settable from the CLI
// (--workers) or the SEELAB_WORKERS environment variable; defaults to 1.
int worker_count();
void set_workers(int w);

// Fixed block size for path loops. Reductions accumulate one partial result
// per block and combine them in ascending block order, so results are
// bit-identical for any worker count.
inline constexpr std::size_t kPathBlock = 1024;

inline std::size_t block_count(std::size_t n, std::size_t block = kPathBlock) {
    return (n + block - 1) / block;
}

// Runs fn(begin, end, block_index) over fixed-size blocks of [0, n).
// fn must only write to storage owned by its block.
void for_blocks(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& fn,
                std::size_t block = kPathBlock);

}  // namespace seelab
