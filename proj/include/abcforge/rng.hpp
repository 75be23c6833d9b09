#pragma once

#include <cassert>
#include <cstdint>

namespace abcforge::rng {

/// SplitMix64 generator (Steele, Lea & Flood; the SplittableRandom update
/// function). Chosen because the algorithm is published, trivially portable,
/// and fully defined by its 64-bit state: the same seed yields the same
/// stream on every platform and standard library.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53 mantissa bits.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n). Unbiased: draws below 2^64 mod n are
    /// rejected before the final modulo.
    std::uint64_t next_below(std::uint64_t n) {
        assert(n > 0);
        const std::uint64_t threshold = (0 - n) % n;
        std::uint64_t r = next_u64();
        while (r < threshold) r = next_u64();
        return r % n;
    }

private:
    std::uint64_t state_;
};

/// Derives an independent per-item seed from a global seed and an item index.
/// This is the SplitMix64 finalizer applied to global_seed + gamma*(index+1),
/// so item streams never alias the global stream or each other.
inline std::uint64_t mix_seed(std::uint64_t global_seed, std::uint64_t index) {
    std::uint64_t z = global_seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace abcforge::rng
