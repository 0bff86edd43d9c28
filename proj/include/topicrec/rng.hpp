#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace topicrec {

// FNV-1a, used for stage cache keys and per-entity seed derivation.
// std::hash is not stable across standard libraries, this is.
inline uint64_t fnv1a64(std::string_view bytes, uint64_t seed = 14695981039346656037ull) {
    uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Combines a base seed with a label (e.g. "fold:3" or a user id) into an
// independent stream seed, so results do not depend on processing order.
inline uint64_t derive_seed(uint64_t base, std::string_view label) {
    return mix64(base ^ fnv1a64(label));
}

// mt19937_64 is fully specified by the standard; the bounded draw and the
// shuffle below are our own so that every byte of output is portable.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next() { return engine_(); }

    // Unbiased integer in [0, n). Lemire's multiply-then-reject method.
    uint64_t below(uint64_t n) {
        if (n == 0) return 0;
        unsigned __int128 m = static_cast<unsigned __int128>(next()) * n;
        auto lo = static_cast<uint64_t>(m);
        if (lo < n) {
            const uint64_t threshold = (0 - n) % n;
            while (lo < threshold) {
                m = static_cast<unsigned __int128>(next()) * n;
                lo = static_cast<uint64_t>(m);
            }
        }
        return static_cast<uint64_t>(m >> 64);
    }

    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace topicrec
