#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace alignkit {

/// Deterministic PRNG (xoshiro256++ seeded via splitmix64). Self-contained so
/// that streams are identical across standard libraries and platforms.
class Rng {
  public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& word : state_) {
            // splitmix64
            x += 0x9e3779b97f4a7c15ull;
            uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
            word = z ^ (z >> 31);
        }
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n) by rejection; n must be positive.
    uint64_t below(uint64_t n) {
        const uint64_t threshold = -n % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    /// Standard normal via Box-Muller (one cached spare).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        double u2 = uniform();
        double radius = std::sqrt(-2.0 * std::log(u1));
        double angle = 6.283185307179586476925286766559 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Fisher-Yates shuffle.
    template <class T>
    void shuffle(std::vector<T>& items) {
        for (size_t i = items.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

  private:
    static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    uint64_t state_[4] = {};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// FNV-1a 64-bit hash; used for seed derivation and input digests.
inline uint64_t fnv1a64(std::string_view bytes) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Derives an independent stream seed from a root seed and a label, so every
/// subsystem (init, per-epoch shuffles, sampling) is reproducible on its own.
inline uint64_t derive_seed(uint64_t root_seed, std::string_view label) {
    return root_seed ^ fnv1a64(label);
}

}  // namespace alignkit
