#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace fedsim {

// SplitMix64 generator. Fully specified arithmetic, so a given seed yields
// the same stream on every platform and build; std:: distributions do not
// guarantee that, which is why sampling helpers live here too.
struct Rng {
    uint64_t state;

    explicit Rng(uint64_t seed) : state(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1) with 53 bits of precision
    double uniform() { return (double) (next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // unbiased integer in [0, n), n > 0
    uint64_t below(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v = next_u64();
        while (v >= limit) {
            v = next_u64();
        }
        return v % n;
    }

    // inclusive bounds
    int64_t range(int64_t lo, int64_t hi) {
        return lo + (int64_t) below((uint64_t) (hi - lo + 1));
    }

    // Fisher-Yates
    template <typename T>
    void shuffle(std::vector<T> & v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = (size_t) below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct values from {0, ..., n-1}, returned in ascending order
    std::vector<int> sample_without_replacement(int n, int k);
};

// Derives an independent seed from (base, tag, a, b). Every consumer of
// randomness hashes its own tuple, so streams never collide and never depend
// on call order.
uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t a = 0, uint64_t b = 0);

} // namespace fedsim
