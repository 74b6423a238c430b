#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

namespace pdmplab {

// Stream of pseudo-random draws owned by exactly one run/replica.
// Every stochastic routine takes one of these explicitly; there is no
// global RNG state anywhere in the library.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : eng_(mix(seed)) {}

    // Derives a well-separated stream from (master, a, b); used to give each
    // (epsilon index, replica) pair its own stream so that results do not
    // depend on scheduling order or thread count.
    static RngStream derive(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
        std::uint64_t s = mix(master + 0x9e3779b97f4a7c15ull * (a + 1));
        s = mix(s + 0xbf58476d1ce4e5b9ull * (b + 1));
        return RngStream(s);
    }

    // Uniform on the open interval (0,1); never returns an endpoint.
    double uniform() {
        const std::uint64_t k = eng_() >> 11;  // 53 bits
        return (static_cast<double>(k) + 0.5) * 0x1.0p-53;
    }

    // Exponential with the given rate (mean 1/rate).
    double exponential(double rate = 1.0) {
        if (!(rate > 0.0)) throw std::domain_error("exponential: rate must be > 0");
        return -std::log(uniform()) / rate;
    }

    double normal() { return normal_(eng_); }

    // Rayleigh with unit scale: density x * exp(-x^2/2) on [0, inf).
    double rayleigh() { return std::sqrt(-2.0 * std::log(uniform())); }

    Eigen::VectorXd normal_vector(Eigen::Index n) {
        Eigen::VectorXd w(n);
        for (Eigen::Index i = 0; i < n; ++i) w[i] = normal();
        return w;
    }

    // Uniform sign in {-1, +1}.
    double sign() { return (eng_() & 1u) ? 1.0 : -1.0; }

    std::uint64_t raw() { return eng_(); }

private:
    static std::uint64_t mix(std::uint64_t z) {
        // splitmix64 finalizer; spreads nearby seeds across the state space.
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::mt19937_64 eng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace pdmplab
