#include "rng.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace fedsim {

std::vector<int> Rng::sample_without_replacement(int n, int k) {
    if (k < 0 || k > n) {
        throw std::invalid_argument("sample_without_replacement: k out of range");
    }
    std::vector<int> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    // partial Fisher-Yates: the first k slots end up holding the sample
    for (int i = 0; i < k; ++i) {
        int j = i + (int) below((uint64_t) (n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

static uint64_t mix64(uint64_t z) {
    z ^= z >> 33;
    z *= 0xff51afd7ed558ccdull;
    z ^= z >> 33;
    z *= 0xc4ceb9fe1a85ec53ull;
    z ^= z >> 33;
    return z;
}

uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t a, uint64_t b) {
    uint64_t h = 0xcbf29ce484222325ull; // FNV-1a over the tag
    for (char c : tag) {
        h ^= (uint64_t) (unsigned char) c;
        h *= 0x100000001b3ull;
    }
    h = mix64(h ^ mix64(base + 0x9e3779b97f4a7c15ull));
    h = mix64(h ^ mix64(a + 0x2545f4914f6cdd1dull));
    h = mix64(h ^ mix64(b + 0x6a09e667f3bcc909ull));
    return h;
}

} // namespace fedsim
