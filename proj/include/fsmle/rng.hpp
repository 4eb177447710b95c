#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace fsmle {

/// SplitMix64 finalizer.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based random stream. The output sequence is a pure function of the key,
/// and child streams are derived from (key, index) so that any simulation batch can be
/// regenerated from (master seed, iteration, proposal) alone, independent of the order
/// in which batches are executed.
///
/// Satisfies UniformRandomBitGenerator, so it plugs into the <random> distributions.
class RngStream {
public:
    using result_type = std::uint64_t;

    constexpr RngStream() noexcept = default;
    explicit constexpr RngStream(std::uint64_t seed) noexcept : key_(mix64(seed ^ 0x6a09e667f3bcc908ULL)) {}

    [[nodiscard]] constexpr RngStream child(std::uint64_t index) const noexcept {
        RngStream s;
        s.key_ = mix64(key_ ^ mix64(index + 0x3c6ef372fe94f82bULL));
        return s;
    }

    [[nodiscard]] constexpr RngStream child(std::initializer_list<std::uint64_t> path) const noexcept {
        RngStream s = *this;
        for (auto i : path) {
            s = s.child(i);
        }
        return s;
    }

    [[nodiscard]] constexpr std::uint64_t key() const noexcept { return key_; }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept { return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace fsmle
