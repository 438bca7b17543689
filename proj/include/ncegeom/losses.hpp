#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ncegeom {

enum class LossKind {
    logistic,
    hinge,
    /// (sum_i v_i)^2: convex but not sub-additive. Only accepted by
    /// subadditivity_margin(); every objective evaluator rejects it.
    square_sum_test,
};

/// A loss family together with its inverse-temperature scale.
struct LossSpec {
    LossKind kind = LossKind::logistic;
    double beta = 1.0;

    static LossSpec logistic(double beta = 1.0) { return {LossKind::logistic, beta}; }
    static LossSpec hinge(double beta = 1.0) { return {LossKind::hinge, beta}; }
    static LossSpec square_sum_test() { return {LossKind::square_sum_test, 1.0}; }

    /// Throws ArgumentError unless beta is positive and finite.
    void validate() const;

    /// Same as validate(), and additionally rejects square_sum_test.
    void validate_objective() const;
};

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

/// l(v). Logistic is log(1 + sum_i exp(-beta v_i)) evaluated as a
/// max-shifted log-sum-exp; hinge is max{0, max_i (1 - beta v_i)}.
double eval(const LossSpec& spec, std::span<const double> v);

/// Gradient of eval(). For hinge this is a subgradient: at a kink the whole
/// slope goes to the lowest-index maximizing coordinate.
std::vector<double> grad(const LossSpec& spec, std::span<const double> v);

/// v^{S<-j}: every coordinate in S replaced by v_j. Indices are 0-based.
std::vector<double> substitute(std::span<const double> v, std::span<const std::size_t> S,
                               std::size_t j);

/// l(v) - (1/|S|) sum_{j in S} l(v^{S<-j}). A nonnegative value means the
/// sub-additivity inequality holds at this (v, S).
double subadditivity_margin(const LossSpec& spec, std::span<const double> v,
                            std::span<const std::size_t> S);

}  // namespace ncegeom
