#include "maelab/rng.hpp"

#include "maelab/error.hpp"

#include <cmath>
#include <numeric>
#include <utility>

namespace maelab {

uint64_t Rng::next_below(uint64_t n) {
    // Rejection sampling over the top multiple of n; no modulo bias.
    const uint64_t limit = n * ((~uint64_t{0}) / n);
    uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

double Rng::next_normal() {
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log1p(-u1)); // log(1-u1), never log(0)
    constexpr double two_pi = 6.283185307179586476925286766559;
    return r * std::cos(two_pi * u2);
}

std::vector<int64_t> sample_without_replacement(Rng& rng, int64_t n, int64_t k) {
    if (n < 0 || k < 0 || k > n) {
        throw ValueError("sample_without_replacement: need 0 <= k <= n, got k=" +
                         std::to_string(k) + ", n=" + std::to_string(n));
    }
    std::vector<int64_t> pool(static_cast<size_t>(n));
    std::iota(pool.begin(), pool.end(), int64_t{0});
    for (int64_t i = 0; i < k; ++i) {
        const int64_t j = i + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(n - i)));
        std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    }
    pool.resize(static_cast<size_t>(k));
    return pool;
}

uint64_t Rng::derive(uint64_t seed, std::initializer_list<uint64_t> keys) {
    Rng mixer(seed);
    uint64_t s = mixer.next_u64();
    for (uint64_t k : keys) {
        Rng step(s ^ (k + 0x9e3779b97f4a7c15ull));
        s = step.next_u64();
    }
    return s;
}

} // namespace maelab
