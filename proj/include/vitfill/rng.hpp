#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace vitfill {

// splitmix64 finalizer; used to diffuse composite seeds (run seed, epoch,
// image index) into well-separated generator seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ splitmix64(b));
}

inline std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return seed_mix(seed_mix(a, b), c);
}

// Deterministic random source. All distribution code is written out here so
// results are identical across standard libraries (std:: distributions are
// implementation-defined; the raw mt19937 stream is not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(static_cast<std::uint32_t>(splitmix64(seed))) {}

    std::uint32_t next_u32() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return next_u32() * (1.0 / 4294967296.0); }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n); n >= 1. Fixed-point multiply keeps this
    // portable; the bias of ~n/2^32 is irrelevant at our sample counts.
    std::uint32_t uniform_below(std::uint32_t n) {
        const std::uint64_t wide = static_cast<std::uint64_t>(next_u32()) * n;
        return static_cast<std::uint32_t>(wide >> 32);
    }

    // Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(uniform_below(static_cast<std::uint32_t>(hi - lo + 1)));
    }

    // Standard normal via Box-Muller. No cached spare: keeps the generator
    // state equal to the engine state, which is what checkpoints serialize.
    double normal() {
        const double u1 = (static_cast<double>(next_u32()) + 0.5) * (1.0 / 4294967296.0);
        const double u2 = next_u32() * (1.0 / 4294967296.0);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Normal(0, std_dev) truncated to +-2 sigma by rejection.
    double trunc_normal(double std_dev) {
        double z = normal();
        while (z < -2.0 || z > 2.0) z = normal();
        return z * std_dev;
    }

    // Fisher-Yates; std::shuffle is implementation-defined, this is not.
    template <typename It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::uint32_t>(last - first);
        for (std::uint32_t i = n; i > 1; --i) {
            const std::uint32_t j = uniform_below(i);
            std::swap(first[i - 1], first[j]);
        }
    }

    std::string state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void set_state(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
    }

private:
    std::mt19937 engine_;
};

} // namespace vitfill
