#pragma once

// Seeded random streams. Every consumer derives its own stream from a root
// seed plus a tuple of stream identifiers, so no global generator exists and
// parallel work is reproducible regardless of scheduling.

#include <array>
#include <bit>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace ncegeom {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Order-sensitive hash of a seed and a list of stream identifiers.
constexpr std::uint64_t derive_seed(std::uint64_t root,
                                    std::initializer_list<std::uint64_t> ids) noexcept {
    std::uint64_t h = mix64(root);
    for (std::uint64_t id : ids) h = mix64(h ^ mix64(id + 0x632BE59BD9B4E019ULL));
    return h;
}

/// Bit pattern of a double, for use as a stream identifier.
inline std::uint64_t seed_bits(double x) noexcept { return std::bit_cast<std::uint64_t>(x); }

/// xoshiro256** generator seeded through SplitMix64.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    result_type operator()() noexcept {
        const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = std::rotl(s_[3], 45);
        return result;
    }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1].
    double uniform_pos() noexcept {
        return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard normal (Marsaglia polar method; the spare value is cached).
    double normal() noexcept;

    /// Gamma(shape, 1) by Marsaglia-Tsang squeeze/rejection; shape < 1 uses
    /// the U^(1/shape) boost and is returned in log space by log_gamma().
    double gamma(double shape) noexcept;

    /// log of a Gamma(shape, 1) variate; safe for tiny shapes.
    double log_gamma(double shape) noexcept;

private:
    std::array<std::uint64_t, 4> s_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Walker/Vose alias table over a finite discrete distribution.
class AliasTable {
public:
    explicit AliasTable(std::span<const double> weights);

    std::size_t size() const noexcept { return entries_.size(); }

    /// Draws an index using 32 random bits.
    std::size_t sample32(std::uint32_t bits) const noexcept {
        const std::uint64_t scaled = static_cast<std::uint64_t>(bits) * entries_.size();
        return pick(static_cast<std::size_t>(scaled >> 32), static_cast<std::uint32_t>(scaled));
    }

    /// Draws an index using a full 64-bit word; use for large tables.
    std::size_t sample64(std::uint64_t bits) const noexcept {
        const unsigned __int128 scaled = static_cast<unsigned __int128>(bits) * entries_.size();
        return pick(static_cast<std::size_t>(scaled >> 64), static_cast<std::uint64_t>(scaled) >> 32);
    }

    std::size_t sample(Rng& rng) const noexcept {
        return sample32(static_cast<std::uint32_t>(rng() >> 32));
    }

private:
    struct Entry {
        std::uint64_t threshold;  // acceptance probability scaled to 2^32
        std::uint64_t alias;
    };

    std::size_t pick(std::size_t column, std::uint64_t frac) const noexcept {
        const Entry& e = entries_[column];
        // Branch-free select: acceptance is a coin flip the predictor cannot learn.
        const std::uint64_t reject = std::uint64_t{0} - static_cast<std::uint64_t>(frac >= e.threshold);
        return static_cast<std::size_t>(column ^ ((column ^ e.alias) & reject));
    }

    std::vector<Entry> entries_;
};

}  // namespace ncegeom
