#include "moco/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace moco {

namespace {
int g_max_threads = 1;
}

void set_max_threads(int n) { g_max_threads = n < 1 ? 1 : n; }
int max_threads() { return g_max_threads; }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    int workers = std::min<std::size_t>(std::size_t(g_max_threads), n);
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    // fixed chunking independent of the worker count
    std::size_t n_chunks = std::min<std::size_t>(n, 64);
    std::size_t chunk = (n + n_chunks - 1) / n_chunks;
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (;;) {
            std::size_t c = next.fetch_add(1);
            std::size_t b = c * chunk;
            if (b >= n) return;
            fn(b, std::min(b + chunk, n));
        }
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
}

}  // namespace moco
