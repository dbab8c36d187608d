#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace weimix {

/// Seeded random source. All draws are derived from a mt19937_64 stream in a
/// fixed way (no std distribution objects), so a given seed reproduces the
/// same sequence on every run of the same binary.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform on [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform on the open interval (0, 1); safe as a -log argument.
    double uniform_open01() {
        for (;;) {
            const double u = uniform01();
            if (u > 0.0) return u;
        }
    }

    /// Standard normal via Box-Muller; consumes two uniforms per call.
    double normal() {
        const double u1 = uniform_open01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
    }

    /// Unbiased uniform integer in [0, n). Rejection sampling on the raw stream.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        for (;;) {
            const std::uint64_t x = gen_();
            if (x < limit) return x % n;
        }
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Derive an independent substream (e.g. one per fold).
    Rng spawn() { return Rng(gen_()); }

private:
    std::mt19937_64 gen_;
};

}  // namespace weimix
