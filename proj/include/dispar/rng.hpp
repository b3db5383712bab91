#pragma once

#include <cstdint>
#include <initializer_list>

namespace dispar {

/// Quantile of the standard normal distribution (Wichura's PPND16).
/// Accurate to ~1e-15 over (0,1); returns +/-infinity at the endpoints.
double normal_quantile(double p);

/// Counter-based deterministic generator.
///
/// A generator is keyed by an ordered tuple of 64-bit values (seed,
/// replicate, repetition, unit, variable, ...).  Draws depend only on the
/// key and the draw counter, never on global state or thread identity, so
/// any partition of work across threads reproduces the same streams.
class CounterRng {
public:
    explicit CounterRng(std::initializer_list<std::uint64_t> key);

    /// Re-key in place without reallocating (hot path helper).
    void reset(std::uint64_t base) {
        base_ = base;
        counter_ = 0;
    }

    std::uint64_t next_u64();

    /// Uniform draw in the open interval (0, 1).
    double next_uniform();

    /// Normal draw via inverse transform.
    double next_normal(double mean, double sd);

    /// Bernoulli draw as 0.0 / 1.0.
    double next_bernoulli(double p);

    /// Uniform integer in [0, n).
    std::uint64_t next_index(std::uint64_t n);

    /// Derive the folded base key for an ordered tuple.
    static std::uint64_t fold(std::initializer_list<std::uint64_t> key);

private:
    std::uint64_t base_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace dispar
