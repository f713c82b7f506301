#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>

namespace llmops {

/// xoshiro256** seeded through splitmix64. The raw 64-bit stream is identical on
/// every platform; derived draws use only IEEE arithmetic plus libm log/sqrt/cos.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()() { return next(); }

    std::uint64_t next();

    /// Uniform on [0,1) with 53 bits of precision.
    double uniform();
    /// Uniform integer on [lo, hi] (inclusive), unbiased.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    /// Standard normal (Box-Muller, one value per call, no cached pair).
    double normal();
    double exponential(double rate);
    /// Exact binomial draw by geometric skipping; cost O(n*p).
    std::int64_t binomial(std::int64_t n, double p);

    /// Independent child stream; leaves this generator advanced by one draw.
    Rng fork();

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(items[i - 1], items[j]);
        }
    }

    const std::array<std::uint64_t, 4>& state() const { return s_; }

private:
    std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t& x);

}  // namespace llmops
