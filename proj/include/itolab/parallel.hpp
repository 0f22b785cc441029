#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace itolab {

/// Number of workers to use when the caller passes 0.
inline unsigned default_workers() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1u : hc;
}

/// Runs body(i) for i in [0, n) on `workers` threads. Work is handed out in
/// fixed-size chunks; the caller is responsible for writing results to slot i
/// so that any reduction happens afterwards in index order.
/// The first exception (lowest index) is rethrown.
inline void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& body) {
    if (workers == 0) workers = default_workers();
    if (n == 0) return;
    if (workers == 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    constexpr std::size_t kChunk = 16;
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    std::size_t err_index = n;
    auto run = [&] {
        for (;;) {
            const std::size_t begin = next.fetch_add(kChunk);
            if (begin >= n) return;
            const std::size_t end = std::min(n, begin + kChunk);
            for (std::size_t i = begin; i < end; ++i) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(err_mu);
                    if (i < err_index) {
                        err_index = i;
                        err = std::current_exception();
                    }
                    return;
                }
            }
        }
    };
    const unsigned nthreads = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    std::vector<std::jthread> pool;
    pool.reserve(nthreads - 1);
    for (unsigned w = 1; w < nthreads; ++w) pool.emplace_back(run);
    run();
    pool.clear();
    if (err) std::rethrow_exception(err);
}

/// Maps body over [0, n) and returns the results in index order.
template <class R, class F>
std::vector<R> parallel_map(std::size_t n, unsigned workers, F&& body) {
    std::vector<R> out(n);
    parallel_for(n, workers, [&](std::size_t i) { out[i] = body(i); });
    return out;
}

/// Accumulates per-index contributions into block-private accumulators of a
/// fixed block size, then merges the blocks in block order. The result is
/// independent of the number of workers.
template <class Acc, class Make, class Body, class Merge>
Acc parallel_accumulate(std::size_t n, unsigned workers, std::size_t block, Make&& make, Body&& body,
                        Merge&& merge) {
    Acc total = make();
    if (n == 0) return total;
    if (block == 0) block = 1;
    const std::size_t nblocks = (n + block - 1) / block;
    // Waves bound memory: at most `wave` block accumulators live at once.
    constexpr std::size_t kWave = 32;
    for (std::size_t w0 = 0; w0 < nblocks; w0 += kWave) {
        const std::size_t w1 = std::min(nblocks, w0 + kWave);
        std::vector<Acc> parts;
        parts.reserve(w1 - w0);
        for (std::size_t b = w0; b < w1; ++b) parts.push_back(make());
        parallel_for(w1 - w0, workers, [&](std::size_t k) {
            const std::size_t b = w0 + k;
            const std::size_t i0 = b * block;
            const std::size_t i1 = std::min(n, i0 + block);
            for (std::size_t i = i0; i < i1; ++i) body(parts[k], i);
        });
        for (auto& p : parts) merge(total, p);
    }
    return total;
}

}  // namespace itolab
