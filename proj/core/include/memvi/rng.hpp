#pragma once

#include <cstdint>
#include <string_view>

#include "memvi/numerics.hpp"

namespace memvi {

/// Counter-based random stream.
///
/// Draw i of a stream with key K is a pure function of (K, i): the SplitMix64
/// finalizer applied to K + i * golden_gamma. Nothing depends on the platform's
/// <random> distributions, so identical seeds give bit-identical samples
/// everywhere. `substream` derives an independent key from a label, which lets
/// parallel workers each own a stream keyed by what they compute rather than by
/// scheduling order.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) noexcept;

    [[nodiscard]] std::uint64_t key() const noexcept { return key_; }
    [[nodiscard]] std::uint64_t counter() const noexcept { return counter_; }

    [[nodiscard]] RngStream substream(std::uint64_t label) const noexcept;
    [[nodiscard]] RngStream substream(std::string_view label) const noexcept;

    std::uint64_t next_u64() noexcept;
    /// Uniform in [0, 1).
    double uniform() noexcept;
    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n) noexcept;
    /// Standard normal via Box-Muller (one output per pair of uniforms).
    double normal() noexcept;
    Vector normal_vector(std::size_t dim, double stddev = 1.0) noexcept;

private:
    RngStream(std::uint64_t key, bool) noexcept : key_(key) {}

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace memvi
