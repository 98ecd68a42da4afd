#pragma once
// Platform-stable seeded randomness. Every stochastic piece of the harness
// (candidate sampling, random baseline, bootstrap resampling) draws from
// SplitMix64 streams derived here, never from std:: distributions, so runs
// are bit-identical across compilers and platforms.

#include <cstdint>
#include <string_view>
#include <vector>

namespace icrs {

// 64-bit FNV-1a. Also the documented text-hash for embedding sidecars and
// run-log prompt hashes.
constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, n) via the multiply-shift reduction; n must be > 0.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

private:
    std::uint64_t state_;
};

// Seed for a named sub-stream (per evaluation cell, per conversation, per
// resample) derived from the master seed. Mixing through SplitMix64 keeps
// nearby keys uncorrelated.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view key) {
    SplitMix64 mix(master ^ fnv1a64(key));
    return mix.next();
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    SplitMix64 mix(master + 0x9e3779b97f4a7c15ULL * (index + 1));
    return mix.next();
}

// In-place Fisher-Yates driven by a SplitMix64 stream.
template <typename T>
void stable_shuffle(std::vector<T>& v, SplitMix64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        using std::swap;
        swap(v[i - 1], v[j]);
    }
}

}  // namespace icrs
