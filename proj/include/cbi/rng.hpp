#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace cbi::rng {

// splitmix64, used only to expand seeds into stream state.
inline std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Counter-derived xoshiro256++ stream. Streams are identified by
// (master seed, path index, label, sub); deriving the same tuple twice
// yields bit-identical output regardless of thread scheduling, which is
// what makes parallel Monte Carlo reproducible here.
class Stream {
public:
    Stream() : s_{1, 2, 3, 4} {}

    static Stream derive(std::uint64_t master, std::uint64_t path,
                         std::uint64_t label, std::uint64_t sub = 0) {
        std::uint64_t x = master;
        x ^= 0x632be59bd9b4e019ULL + splitmix64(x) + path;
        x ^= splitmix64(x) + (label << 1);
        x ^= splitmix64(x) + (sub << 2);
        Stream st;
        for (auto& w : st.s_) w = splitmix64(x);
        // all-zero state is invalid for xoshiro; splitmix output of a
        // nonzero chain cannot produce four zero words in practice, but
        // guard anyway
        if ((st.s_[0] | st.s_[1] | st.s_[2] | st.s_[3]) == 0) st.s_[0] = 1;
        return st;
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform on [0,1), 53-bit resolution
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // uniform on (0,1], safe as a log() argument
    double uniform_pos() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    // Box-Muller without caching: consumes exactly two words per call,
    // keeping stream consumption independent of call history.
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

    // Exact Poisson sampling. Product-of-uniforms for small means, sum of
    // independent chunks for large ones (sum of Poissons is Poisson).
    std::uint64_t poisson(double mean) {
        std::uint64_t total = 0;
        while (mean > 500.0) {
            total += poisson_small(500.0);
            mean -= 500.0;
        }
        return total + poisson_small(mean);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t poisson_small(double mean) {
        if (mean <= 0.0) return 0;
        const double limit = std::exp(-mean);
        std::uint64_t k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform01();
        } while (p > limit);
        return k - 1;
    }

    std::array<std::uint64_t, 4> s_;
};

// Fixed stream labels used by the simulation drivers.
namespace label {
inline constexpr std::uint64_t brownian = 1;
inline constexpr std::uint64_t immigration_jumps = 2;
inline constexpr std::uint64_t branching_jumps = 3;   // + axis j in `sub`
inline constexpr std::uint64_t gaussian_correction = 4;
}  // namespace label

}  // namespace cbi::rng
