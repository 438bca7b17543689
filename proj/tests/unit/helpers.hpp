#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "ncegeom/latent_model.hpp"
#include "ncegeom/rng.hpp"

namespace testing {

/// Gaussian vector with the given length.
inline std::vector<double> normal_vector(ncegeom::Rng& rng, std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = scale * rng.normal();
    return v;
}

/// Random symmetric matrix with unit diagonal and off-diagonals in [-1, 1];
/// usually indefinite for C >= 3.
inline Eigen::MatrixXd random_unit_diagonal(int C, ncegeom::Rng& rng) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(C, C);
    for (int i = 0; i < C; ++i)
        for (int j = i + 1; j < C; ++j) A(i, j) = A(j, i) = 2.0 * rng.uniform() - 1.0;
    return A;
}

inline double rel_err(double got, double want, double floor) {
    return std::abs(got - want) / std::max(std::abs(want), floor);
}

/// Count-vector brute force: all C^(k+1) tuples (anchor, negatives).
template <class F>
void for_each_tuple(int C, int len, F&& f) {
    std::vector<int> t(static_cast<std::size_t>(len), 0);
    while (true) {
        f(t);
        int i = 0;
        while (i < len && ++t[static_cast<std::size_t>(i)] == C) t[static_cast<std::size_t>(i++)] = 0;
        if (i == len) return;
    }
}

}  // namespace testing
