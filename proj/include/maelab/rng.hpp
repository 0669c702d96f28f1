#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace maelab {

/// Deterministic 64-bit RNG used everywhere randomness is needed.
///
/// The generator is splitmix64 (Steele et al.), chosen because its output
/// sequence is fully specified by the code below and therefore identical on
/// every platform and standard library. Distribution code (unit doubles,
/// bounded ints, normals) is implemented here as well, since the std::
/// distributions are not portable across implementations.
///
/// Streams are split by key: derive(seed, {k0, k1, ...}) produces an
/// independent stream seed for a named purpose, e.g. (run_seed, step,
/// image_index). Stream keys used by the project are in rng_stream below.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53-bit resolution.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double next_range(double lo, double hi) {
        return lo + (hi - lo) * next_unit();
    }

    /// Unbiased uniform integer in [0, n). n must be > 0.
    uint64_t next_below(uint64_t n);

    /// Standard normal via Box-Muller. Uses two uniforms per draw; the sine
    /// branch is discarded so the object stays stateless beyond `state_`.
    double next_normal();

    /// Derive an independent stream seed from a base seed and a key path.
    static uint64_t derive(uint64_t seed, std::initializer_list<uint64_t> keys);

private:
    uint64_t state_;
};

/// k distinct indices drawn uniformly from {0, ..., n-1} by partial
/// Fisher-Yates, returned in draw order. Requires 0 <= k <= n.
std::vector<int64_t> sample_without_replacement(Rng& rng, int64_t n, int64_t k);

/// Named stream keys. Keeping the streams separate guarantees e.g. that
/// enabling the MAE loss term cannot shift the data-noise sequence.
namespace rng_stream {
inline constexpr uint64_t init = 1;        // weight initialization
inline constexpr uint64_t batch = 2;       // batch index sampling
inline constexpr uint64_t data_noise = 3;  // degradation noise, train split
inline constexpr uint64_t masking = 4;     // MAE visible-subset sampling
inline constexpr uint64_t crops = 5;       // patch-variant crop coordinates
inline constexpr uint64_t val_noise = 6;   // degradation noise, val split
inline constexpr uint64_t synth = 7;       // synthetic dataset generation
} // namespace rng_stream

} // namespace maelab
