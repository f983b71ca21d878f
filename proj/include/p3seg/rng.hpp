#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace p3seg {

// Deterministic counter-friendly random source. All randomness in the project
// flows through this type so that runs are reproducible bit-for-bit and any
// substream can be re-derived from (seed, tag, a, b) without touching the
// others. Core generator is splitmix64, which is plenty for data synthesis
// and box placement.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // Avoid the all-zero fixed point and decorrelate small seeds.
        next_u64();
        next_u64();
    }

    // Derive an independent substream from a seed, a role tag, and up to two
    // integer coordinates (e.g. iteration and batch slot).
    static Rng derive(std::uint64_t seed, std::string_view tag,
                      std::uint64_t a = 0, std::uint64_t b = 0) {
        std::uint64_t h = 0xcbf29ce484222325ull; // FNV-1a
        for (char c : tag) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ull;
        }
        std::uint64_t s = mix(seed ^ h);
        s = mix(s ^ (a + 0x9e3779b97f4a7c15ull));
        s = mix(s ^ (b + 0x7f4a7c159e3779b9ull));
        return Rng(s);
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n). Rejection sampling keeps it exactly uniform.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    // Standard normal via Box-Muller, one value per call (second discarded
    // to keep the stream position independent of call pairing).
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

} // namespace p3seg
