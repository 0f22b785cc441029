#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace itolab {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
/// Output block k of stream (key) is a pure function of (key, counter).
class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;

    constexpr Philox4x32(std::uint64_t key) noexcept
        : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)} {}

    constexpr Block operator()(std::uint64_t hi, std::uint64_t lo) const noexcept {
        Block ctr{static_cast<std::uint32_t>(lo), static_cast<std::uint32_t>(lo >> 32),
                  static_cast<std::uint32_t>(hi), static_cast<std::uint32_t>(hi >> 32)};
        std::array<std::uint32_t, 2> k = key_;
        for (int round = 0; round < 10; ++round) {
            ctr = single_round(ctr, k);
            k[0] += kWeyl0;
            k[1] += kWeyl1;
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static constexpr Block single_round(const Block& c, const std::array<std::uint32_t, 2>& k) noexcept {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
        return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
                static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
    }

    std::array<std::uint32_t, 2> key_;
};

/// SplitMix64 finalizer; used to derive independent experiment seeds from a base seed and tags.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
    return mix64(seed ^ mix64(tag + 0x632BE59BD9B4E019ull));
}

/// Reproducible stream of uniforms and standard normals for one path.
/// Draw n is determined by (seed, path_index, n) only.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t path_index) noexcept
        : gen_(seed), path_(path_index) {}

    std::uint64_t seed_key() const noexcept { return path_; }
    std::uint64_t blocks_used() const noexcept { return counter_; }

    /// Uniform on the open interval (0, 1).
    double uniform() {
        if (have_uniform_) {
            have_uniform_ = false;
            return spare_uniform_;
        }
        const auto blk = gen_(path_, counter_++);
        spare_uniform_ = to_unit(blk[2], blk[3]);
        have_uniform_ = true;
        return to_unit(blk[0], blk[1]);
    }

    double normal() {
        if (have_normal_) {
            have_normal_ = false;
            return spare_normal_;
        }
        // Box-Muller on one Philox block: two normals per block.
        const auto blk = gen_(path_, counter_++);
        const double u1 = to_unit(blk[0], blk[1]);
        const double u2 = to_unit(blk[2], blk[3]);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phi = 2.0 * std::numbers::pi * u2;
        spare_normal_ = r * std::sin(phi);
        have_normal_ = true;
        return r * std::cos(phi);
    }

private:
    static double to_unit(std::uint32_t a, std::uint32_t b) noexcept {
        const std::uint64_t bits = ((static_cast<std::uint64_t>(a) << 32) | b) >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    Philox4x32 gen_;
    std::uint64_t path_;
    std::uint64_t counter_ = 0;
    double spare_normal_ = 0.0;
    double spare_uniform_ = 0.0;
    bool have_normal_ = false;
    bool have_uniform_ = false;
};

/// Stream for path `path_index` of experiment `seed`.
inline RandomStream make_rng_stream(std::uint64_t seed, std::uint64_t path_index) {
    return RandomStream(seed, path_index);
}

}  // namespace itolab
