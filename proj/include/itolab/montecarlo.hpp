#pragma once

#include <cstdint>
#include <vector>

#include "itolab/parallel.hpp"
#include "itolab/rng.hpp"
#include "itolab/stats.hpp"

namespace itolab {

/// Runs fn(stream, i) for i < n with the stream keyed by (seed, i) and returns the
/// values in index order; the result does not depend on `workers`.
template <class F>
std::vector<double> mc_values(std::size_t n, unsigned workers, std::uint64_t seed, F&& fn) {
    return parallel_map<double>(n, workers, [&](std::size_t i) {
        auto s = make_rng_stream(seed, i);
        return fn(s, i);
    });
}

template <class F>
RunningStats mc_stats(std::size_t n, unsigned workers, std::uint64_t seed, F&& fn) {
    RunningStats st;
    for (double v : mc_values(n, workers, seed, fn)) st.add(v);
    return st;
}

/// Fraction of paths for which fn returns true, with a Wilson interval.
template <class F>
Proportion mc_proportion(std::size_t n, unsigned workers, std::uint64_t seed, F&& fn, double z = 1.96) {
    const auto v = mc_values(n, workers, seed, [&](RandomStream& s, std::size_t i) { return fn(s, i) ? 1.0 : 0.0; });
    std::size_t hits = 0;
    for (double x : v) hits += x > 0.5;
    return wilson(hits, n, z);
}

}  // namespace itolab
