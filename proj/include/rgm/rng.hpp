#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace rgm {

/**
 * Deterministic random helpers on top of mt19937_64.
 *
 * The std::*_distribution adaptors are implementation-defined, so the same
 * seed can produce different streams under different standard libraries.
 * Everything that feeds experiment data goes through this class instead;
 * a (config, seed) pair then reproduces runs bit for bit.
 */
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    std::size_t uniform_below(std::size_t n) {
        if (n == 0) throw std::invalid_argument("uniform_below: n must be positive");
        std::uint64_t bound = n;
        std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / bound * bound;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % bound);
    }

    /// Standard normal via Box-Muller (two uniforms per draw, no cached spare).
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /**
     * Sample an index from an unnormalized weight array by inverse CDF.
     * `total` must equal the sum of weights (passed in to avoid re-summing
     * in hot loops). Falls back to the last positive-weight index when
     * rounding pushes the cursor past the end.
     */
    std::size_t sample(const double* weights, std::size_t n, double total) {
        if (n == 0 || total <= 0.0) throw std::invalid_argument("sample: empty or zero-mass weights");
        double u = uniform01() * total;
        double acc = 0.0;
        std::size_t last_positive = 0;
        bool seen_positive = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (weights[i] > 0.0) {
                last_positive = i;
                seen_positive = true;
            }
            acc += weights[i];
            if (u < acc) return i;
        }
        if (!seen_positive) throw std::invalid_argument("sample: all weights zero");
        return last_positive;
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace rgm
