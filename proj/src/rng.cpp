#include "ncegeom/rng.hpp"

#include <cmath>
#include <numeric>

#include "ncegeom/error.hpp"

namespace ncegeom {

Rng::Rng(std::uint64_t seed) noexcept {
    std::uint64_t x = seed;
    for (auto& word : s_) {
        x += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        word = z ^ (z >> 31);
    }
}

double Rng::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
}

namespace {

// Marsaglia & Tsang (2000) for shape >= 1, returned as log of the variate.
double log_gamma_ge1(Rng& rng, double shape) noexcept {
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform_pos();
        const double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return std::log(d * v);
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return std::log(d * v);
    }
}

}  // namespace

double Rng::log_gamma(double shape) noexcept {
    if (shape >= 1.0) return log_gamma_ge1(*this, shape);
    const double base = log_gamma_ge1(*this, shape + 1.0);
    return base + std::log(uniform_pos()) / shape;
}

double Rng::gamma(double shape) noexcept { return std::exp(log_gamma(shape)); }

AliasTable::AliasTable(std::span<const double> weights)
    : entries_(weights.size()) {
    const std::size_t n = weights.size();
    if (n == 0) throw ArgumentError("alias table needs at least one weight");
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(total > 0.0) || !std::isfinite(total))
        throw ArgumentError("alias table weights must have a positive finite sum");

    std::vector<double> scaled(n);
    std::vector<std::size_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
        if (weights[i] < 0.0) throw ArgumentError("alias table weights must be nonnegative");
        scaled[i] = weights[i] * static_cast<double>(n) / total;
        (scaled[i] < 1.0 ? small : large).push_back(i);
    }
    constexpr double kOne = 4294967296.0;
    while (!small.empty() && !large.empty()) {
        const std::size_t s = small.back();
        small.pop_back();
        const std::size_t l = large.back();
        entries_[s] = {static_cast<std::uint64_t>(std::llround(scaled[s] * kOne)), l};
        scaled[l] = (scaled[l] + scaled[s]) - 1.0;
        if (scaled[l] < 1.0) {
            large.pop_back();
            small.push_back(l);
        }
    }
    for (std::size_t i : large) {
        entries_[i] = {static_cast<std::uint64_t>(kOne), i};
    }
    for (std::size_t i : small) {  // round-off leftovers
        entries_[i] = {static_cast<std::uint64_t>(kOne), i};
    }
}

}  // namespace ncegeom
