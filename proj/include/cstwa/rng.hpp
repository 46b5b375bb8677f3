#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace cstwa {

// Deterministic splittable PRNG with a splitmix64 core. The same seed yields
// the same stream on every platform; labeled child streams depend only on the
// parent's seed, not on how much of the parent stream has been consumed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Box-Muller; consumes two uniforms per draw, no cached second value.
    double normal() {
        double u1 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Index in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t child_seed(std::string_view label) const {
        std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
        for (const char c : label) {
            h ^= static_cast<std::uint8_t>(c);
            h *= 0x100000001b3ULL;
        }
        std::uint64_t z = seed_ ^ h;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    Rng child(std::string_view label) const { return Rng(child_seed(label)); }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

} // namespace cstwa
