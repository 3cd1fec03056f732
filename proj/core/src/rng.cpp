#include "memvi/rng.hpp"

#include <cmath>
#include <numbers>

namespace memvi {
namespace {

constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

std::uint64_t mix64(std::uint64_t x) noexcept {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

RngStream::RngStream(std::uint64_t seed) noexcept : key_(mix64(seed + kGoldenGamma)) {}

RngStream RngStream::substream(std::uint64_t label) const noexcept {
    return RngStream(mix64(key_ ^ mix64(label + 0x632BE59BD9B4E019ULL)), true);
}

RngStream RngStream::substream(std::string_view label) const noexcept { return substream(fnv1a(label)); }

std::uint64_t RngStream::next_u64() noexcept {
    const std::uint64_t c = counter_++;
    return mix64(key_ + (c + 1) * kGoldenGamma);
}

double RngStream::uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) noexcept {
    // Lemire's multiply-shift; bias is below 2^-64 * n, irrelevant at our sizes.
    __extension__ using u128 = unsigned __int128;
    const u128 product = static_cast<u128>(next_u64()) * n;
    return static_cast<std::uint64_t>(product >> 64);
}

double RngStream::normal() noexcept {
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Vector RngStream::normal_vector(std::size_t dim, double stddev) noexcept {
    Vector v(dim);
    for (auto& x : v) x = stddev * normal();
    return v;
}

}  // namespace memvi
