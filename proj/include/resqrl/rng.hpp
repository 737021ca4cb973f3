#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

namespace resqrl {

/**
 * Counter-based Philox4x32-10 generator.
 *
 * The key is the user seed; the upper half of the counter holds a stream id,
 * so every (seed, stream) pair is an independent sequence. Splitting never
 * touches the parent's position, which keeps replicate/chain/draw streams
 * reproducible no matter how work is scheduled.
 */
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return next_u64(); }
    std::uint64_t next_u64();

    /// Uniform on the open interval (0, 1).
    double uniform();
    double normal();
    double exponential();

    /// Independent child stream identified by an integer tag.
    Rng split(std::uint64_t tag) const;
    /// Independent child stream identified by a name and an index.
    Rng split(std::string_view name, std::uint64_t index = 0) const;

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

private:
    void refill();

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint64_t, 2> buf_{};
    int pos_ = 2;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// 64-bit FNV-1a, used for stream names and schema fingerprints.
std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 14695981039346656037ULL);

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

}  // namespace resqrl
