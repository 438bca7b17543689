#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "ncegeom/rng.hpp"

namespace ncegeom {

/// Probability vector over C >= 2 latent classes. Entries are strictly
/// positive and sum to one within 1e-12.
class ClassDistribution {
public:
    explicit ClassDistribution(std::vector<double> probs);

    const std::vector<double>& probs() const noexcept { return probs_; }
    int classes() const noexcept { return static_cast<int>(probs_.size()); }
    double operator[](std::size_t c) const noexcept { return probs_[c]; }
    double rho_min() const noexcept { return rho_min_; }
    double rho_max() const noexcept { return rho_max_; }
    bool is_uniform(double tol = 1e-12) const noexcept;

private:
    std::vector<double> probs_;
    double rho_min_ = 0.0;
    double rho_max_ = 0.0;
};

ClassDistribution uniform_distribution(int C);

/// Dirichlet(alpha, ..., alpha) draw from normalized Gamma(alpha, 1) variates.
/// Deterministic in `seed`; each coordinate uses its own substream.
ClassDistribution dirichlet_sample(int C, double alpha, std::uint64_t seed);

/// C x d matrix whose rows are unit-norm class embeddings (tolerance 1e-9).
class Representation {
public:
    explicit Representation(Eigen::MatrixXd rows);

    const Eigen::MatrixXd& matrix() const noexcept { return U_; }
    int classes() const noexcept { return static_cast<int>(U_.rows()); }
    int dim() const noexcept { return static_cast<int>(U_.cols()); }

private:
    Eigen::MatrixXd U_;
};

/// Symmetric PSD matrix with unit diagonal. Construction checks symmetry
/// and the diagonal within 1e-9 and the minimum eigenvalue against -1e-8,
/// then stores the exactly symmetrized matrix with an exact unit diagonal.
class CorrelationMatrix {
public:
    static constexpr double kSymmetryTol = 1e-9;
    static constexpr double kDiagonalTol = 1e-9;
    static constexpr double kEigenTol = 1e-8;

    explicit CorrelationMatrix(const Eigen::MatrixXd& Z);

    const Eigen::MatrixXd& matrix() const noexcept { return Z_; }
    int size() const noexcept { return static_cast<int>(Z_.rows()); }
    double operator()(int i, int j) const noexcept { return Z_(i, j); }

    /// Smallest eigenvalue of the stored matrix.
    double min_eigenvalue() const;

private:
    Eigen::MatrixXd Z_;
};

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Eigen::MatrixXd& A);

/// Simplex ETF in dimension C: rows sqrt(C/(C-1)) (e_c - 1/C).
Representation simplex_etf(int C);

/// The Gram matrix U U^T.
CorrelationMatrix gram(const Representation& rep);

/// U with U U^T = Z. Cholesky when the spectrum is safely positive,
/// else a clipped eigendecomposition followed by row renormalization.
Representation factor(const CorrelationMatrix& Z);

/// The common off-diagonal value if every off-diagonal entry lies within
/// `tol` of their mean.
std::optional<double> equiangular_value(const CorrelationMatrix& Z, double tol);

/// Gram matrix of C independent uniformly random unit vectors in R^C.
CorrelationMatrix random_correlation(int C, Rng& rng);

/// Mean and population standard deviation of the strict upper triangle.
struct OffDiagonalStats {
    double mean = 0.0;
    double std = 0.0;
};
OffDiagonalStats off_diagonal_stats(const Eigen::MatrixXd& Z);

}  // namespace ncegeom
