#pragma once

// Counter-based random numbers (Philox4x32-10) with named substreams.
//
// A generator is identified by (key, stream). Child streams are derived by
// hashing a name or index into the stream id, so any consumer can be handed
// an independent sequence without coordinating with the others. The output
// of a given (key, stream, position) never depends on how many other streams
// were used, which is what keeps results independent of thread count.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>

namespace narc {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                  std::array<std::uint32_t, 2> key) noexcept {
    constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
        const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kW0;
        key[1] += kW1;
    }
    return ctr;
}

}  // namespace detail

class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) noexcept
        : key_(seed), stream_(stream) {}

    /// Independent child stream identified by an integer.
    [[nodiscard]] Rng split(std::uint64_t id) const noexcept {
        return Rng(key_, detail::splitmix64(stream_ ^ detail::splitmix64(id + 0x632BE59BD9B4E019ull)));
    }

    /// Independent child stream identified by a name ("design", "bridge", ...).
    [[nodiscard]] Rng split(std::string_view name) const noexcept {
        return split(detail::fnv1a64(name));
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        if (buffered_ == 0) refill();
        return buffer_[--buffered_];
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Standard normal by Box-Muller; always consumes exactly two uniforms.
    double normal() noexcept {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double sd) noexcept { return mean + sd * normal(); }

    [[nodiscard]] std::uint64_t key() const noexcept { return key_; }
    [[nodiscard]] std::uint64_t stream() const noexcept { return stream_; }

private:
    void refill() noexcept {
        const std::array<std::uint32_t, 4> ctr{
            static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
            static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
        const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(key_),
                                               static_cast<std::uint32_t>(key_ >> 32)};
        const auto out = detail::philox4x32_10(ctr, key);
        ++block_;
        // Consumed back to front by operator().
        buffer_[1] = (std::uint64_t{out[1]} << 32) | out[0];
        buffer_[0] = (std::uint64_t{out[3]} << 32) | out[2];
        buffered_ = 2;
    }

    std::uint64_t key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    int buffered_ = 0;
};

}  // namespace narc
