#pragma once

#include <cstdint>
#include <string_view>

namespace mre {

// 64-bit FNV-1a, used to derive per-tensor / per-paragraph RNG streams
// and to fingerprint input files in run manifests.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// SplitMix64 (Steele, Lea & Flood 2014). Chosen because the full draw
// sequence is defined by integer arithmetic only, so identical seeds give
// identical streams on every platform. Floating-point draws are derived
// from the integer stream with fixed formulas below.
struct RngState {
    std::uint64_t state = 0;

    RngState() = default;
    explicit RngState(std::uint64_t seed) : state(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1): top 53 bits scaled by 2^-53.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n) via rejection-free modulo of the high word.
    // Bias is negligible for the desk-scale ranges used here (n << 2^32).
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via the cosine branch of Box-Muller. One normal per
    // two uniforms; no cached second value, so the stream position is a
    // pure function of the draw count.
    double next_normal();
};

// Child stream for a named tensor / record. The child seed depends only on
// (master seed, tag), never on the parent's draw position, so adding or
// reordering other streams cannot perturb this one.
inline RngState derive_stream(std::uint64_t master_seed, std::string_view tag) {
    RngState mix(master_seed ^ fnv1a64(tag));
    return RngState(mix.next_u64());
}

}  // namespace mre
