#include "seelab/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace seelab {

namespace {

int g_workers = 0;  // 0 = not set yet

int env_workers() {
    if (const char* s = std::getenv("SEELAB_WORKERS")) {
        const int w = std::atoi(s);
        if (w >= 1) return w;
    }
    return 1;
}

}  // namespace

int worker_count() {
    if (g_workers <= 0) g_workers = env_workers();
    return g_workers;
}

void set_workers(int w) { g_workers = w >= 1 ? w : 1; }

void for_blocks(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& fn,
                std::size_t block) {
    if (n == 0) return;
    const std::size_t nblocks = block_count(n, block);
    const std::size_t team =
        std::min<std::size_t>(static_cast<std::size_t>(worker_count()), nblocks);
    if (team <= 1) {
        for (std::size_t b = 0; b < nblocks; ++b)
            fn(b * block, std::min(n, (b + 1) * block), b);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto run = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= nblocks) return;
            fn(b * block, std::min(n, (b + 1) * block), b);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(team - 1);
    for (std::size_t i = 0; i + 1 < team; ++i) pool.emplace_back(run);
    run();
    for (auto& t : pool) t.join();
}

}  // namespace seelab
