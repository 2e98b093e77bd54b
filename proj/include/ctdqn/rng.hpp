#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace ctdqn {

/// splitmix64 step; used to derive decorrelated stream seeds from (seed, tag, index).
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d4a4acf8d2d695ULL;
    return z ^ (z >> 31);
}

/// Deterministic random source. All distributions are implemented explicitly
/// (never via std:: distribution adaptors, whose output sequences differ
/// across standard libraries), so a seed fixes the exact value sequence on
/// every platform.
class Rng {
public:
    // Stream tags: each independent consumer of randomness gets its own tag so
    // adding a new consumer never shifts the draws of an existing one.
    static constexpr uint64_t kTagEpisode = 1;
    static constexpr uint64_t kTagTrial = 2;
    static constexpr uint64_t kTagInit = 3;
    static constexpr uint64_t kTagAction = 4;
    static constexpr uint64_t kTagBuffer = 5;
    static constexpr uint64_t kTagStart = 6;
    static constexpr uint64_t kTagFit = 7;

    explicit Rng(uint64_t seed) : engine_(seed) {}

    /// Mixes (seed, tag, index) into a decorrelated stream seed; the same
    /// triple always yields the same seed.
    static uint64_t derive(uint64_t seed, uint64_t tag, uint64_t index) {
        uint64_t s = seed;
        uint64_t a = splitmix64(s);
        s ^= tag * 0x9e3779b97f4a7c15ULL;
        uint64_t b = splitmix64(s);
        s ^= index * 0xda942042e4dd58b5ULL;
        uint64_t c = splitmix64(s);
        return a ^ (b << 1) ^ (c >> 1);
    }

    /// Independent stream for (seed, tag, index).
    static Rng stream(uint64_t seed, uint64_t tag, uint64_t index) {
        return Rng(derive(seed, tag, index));
    }

    uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1): top 53 bits of one 64-bit draw.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1]: complement of uniform(), never exactly zero
    /// (safe as a log argument).
    double uniform_open0() { return 1.0 - uniform(); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Rejection sampling on 64-bit words, so the
    /// result is exactly uniform and identical on every platform.
    uint64_t uniform_int(uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller. Consumes exactly two uniforms per
    /// pair and caches the second value, so draw counts are predictable.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open0();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace ctdqn
