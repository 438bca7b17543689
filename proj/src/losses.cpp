#include "ncegeom/losses.hpp"

#include <algorithm>
#include <cmath>

#include "ncegeom/error.hpp"

namespace ncegeom {

namespace {

void check_vector(std::span<const double> v) {
    if (v.empty()) throw ArgumentError("loss argument vector must be nonempty");
    for (double x : v)
        if (!std::isfinite(x)) throw ArgumentError("loss argument vector has a non-finite entry");
}

}  // namespace

void LossSpec::validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta))
        throw ArgumentError("loss scale beta must be positive and finite");
}

void LossSpec::validate_objective() const {
    validate();
    if (kind == LossKind::square_sum_test)
        throw ArgumentError("square_sum_test is only valid for the sub-additivity check");
}

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::logistic: return "logistic";
        case LossKind::hinge: return "hinge";
        case LossKind::square_sum_test: return "square_sum_test";
    }
    return "unknown";
}

LossKind parse_loss_kind(const std::string& name) {
    if (name == "logistic") return LossKind::logistic;
    if (name == "hinge") return LossKind::hinge;
    if (name == "square_sum_test") return LossKind::square_sum_test;
    throw ArgumentError("unknown loss kind '" + name + "'");
}

double eval(const LossSpec& spec, std::span<const double> v) {
    spec.validate();
    check_vector(v);
    switch (spec.kind) {
        case LossKind::logistic: {
            // log(exp(0) + sum_i exp(-beta v_i)), shifted by the largest exponent.
            // m + log1p(sum of the remaining shifted terms); the largest is exactly 1.
            double m = 0.0;
            std::ptrdiff_t top = -1;
            for (std::size_t i = 0; i < v.size(); ++i)
                if (-spec.beta * v[i] > m) m = -spec.beta * v[i], top = static_cast<std::ptrdiff_t>(i);
            double rest = top < 0 ? 0.0 : std::exp(-m);
            for (std::size_t i = 0; i < v.size(); ++i)
                if (static_cast<std::ptrdiff_t>(i) != top) rest += std::exp(-spec.beta * v[i] - m);
            return m + std::log1p(rest);
        }
        case LossKind::hinge: {
            double m = 0.0;
            for (double x : v) m = std::max(m, 1.0 - spec.beta * x);
            return m;
        }
        case LossKind::square_sum_test: {
            double s = 0.0;
            for (double x : v) s += x;
            return s * s;
        }
    }
    return 0.0;
}

std::vector<double> grad(const LossSpec& spec, std::span<const double> v) {
    spec.validate();
    check_vector(v);
    std::vector<double> g(v.size(), 0.0);
    switch (spec.kind) {
        case LossKind::logistic: {
            double m = 0.0;
            for (double x : v) m = std::max(m, -spec.beta * x);
            double s = std::exp(-m);
            for (std::size_t i = 0; i < v.size(); ++i) {
                g[i] = std::exp(-spec.beta * v[i] - m);
                s += g[i];
            }
            for (double& gi : g) gi *= -spec.beta / s;
            break;
        }
        case LossKind::hinge: {
            double best = 0.0;
            std::size_t arg = v.size();
            for (std::size_t i = 0; i < v.size(); ++i) {
                const double h = 1.0 - spec.beta * v[i];
                if (h > best) {
                    best = h;
                    arg = i;
                }
            }
            if (arg < v.size()) g[arg] = -spec.beta;
            break;
        }
        case LossKind::square_sum_test: {
            double s = 0.0;
            for (double x : v) s += x;
            std::fill(g.begin(), g.end(), 2.0 * s);
            break;
        }
    }
    return g;
}

std::vector<double> substitute(std::span<const double> v, std::span<const std::size_t> S,
                               std::size_t j) {
    if (S.empty()) throw ArgumentError("substitution set must be nonempty");
    for (std::size_t i : S)
        if (i >= v.size()) throw ArgumentError("substitution index out of range");
    if (std::find(S.begin(), S.end(), j) == S.end())
        throw ArgumentError("substitution source index must belong to the set");
    std::vector<double> out(v.begin(), v.end());
    for (std::size_t i : S) out[i] = v[j];
    return out;
}

double subadditivity_margin(const LossSpec& spec, std::span<const double> v,
                            std::span<const std::size_t> S) {
    const double base = eval(spec, v);
    if (S.empty()) throw ArgumentError("substitution set must be nonempty");
    double avg = 0.0;
    for (std::size_t j : S) avg += eval(spec, substitute(v, S, j));
    return base - avg / static_cast<double>(S.size());
}

}  // namespace ncegeom
