#include "ncegeom/latent_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ncegeom/error.hpp"

namespace ncegeom {

ClassDistribution::ClassDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.size() < 2) throw ArgumentError("class distribution needs at least 2 classes");
    double sum = 0.0;
    for (double p : probs_) {
        if (!(p > 0.0) || !std::isfinite(p))
            throw ArgumentError("class probabilities must be positive and finite");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw ArgumentError("class probabilities must sum to 1 (got " + std::to_string(sum) + ")");
    const auto [lo, hi] = std::minmax_element(probs_.begin(), probs_.end());
    rho_min_ = *lo;
    rho_max_ = *hi;
}

bool ClassDistribution::is_uniform(double tol) const noexcept {
    return rho_max_ - rho_min_ <= tol;
}

ClassDistribution uniform_distribution(int C) {
    if (C < 2) throw ArgumentError("uniform distribution needs C >= 2");
    return ClassDistribution(std::vector<double>(static_cast<std::size_t>(C), 1.0 / C));
}

ClassDistribution dirichlet_sample(int C, double alpha, std::uint64_t seed) {
    if (C < 2) throw ArgumentError("Dirichlet sample needs C >= 2");
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw ArgumentError("Dirichlet concentration must be positive and finite");

    // Log-space normalization keeps tiny-alpha draws strictly positive.
    for (std::uint64_t attempt = 0;; ++attempt) {
        std::vector<double> logs(static_cast<std::size_t>(C));
        for (int c = 0; c < C; ++c) {
            Rng rng(derive_seed(seed, {attempt, static_cast<std::uint64_t>(c)}));
            logs[static_cast<std::size_t>(c)] = rng.log_gamma(alpha);
        }
        const double m = *std::max_element(logs.begin(), logs.end());
        std::vector<double> p(logs.size());
        double sum = 0.0;
        for (std::size_t c = 0; c < p.size(); ++c) {
            p[c] = std::exp(logs[c] - m);
            sum += p[c];
        }
        bool positive = true;
        for (double& x : p) {
            x /= sum;
            positive = positive && x > 0.0;
        }
        if (!positive) continue;
        // Fold the rounding residue into the largest entry.
        const double total = std::accumulate(p.begin(), p.end(), 0.0);
        *std::max_element(p.begin(), p.end()) += 1.0 - total;
        return ClassDistribution(std::move(p));
    }
}

Representation::Representation(Eigen::MatrixXd rows) : U_(std::move(rows)) {
    if (U_.rows() < 1 || U_.cols() < 1)
        throw InvariantError("representation must have at least one row and column");
    if (!U_.allFinite()) throw InvariantError("representation has non-finite entries");
    for (Eigen::Index c = 0; c < U_.rows(); ++c) {
        const double n = U_.row(c).norm();
        if (std::abs(n - 1.0) > 1e-9)
            throw InvariantError("representation row " + std::to_string(c) +
                                 " is not unit norm (norm " + std::to_string(n) + ")");
    }
}

double min_eigenvalue(const Eigen::MatrixXd& A) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A, Eigen::EigenvaluesOnly);
    return eig.eigenvalues()(0);
}

CorrelationMatrix::CorrelationMatrix(const Eigen::MatrixXd& Z) {
    if (Z.rows() != Z.cols() || Z.rows() < 1)
        throw InvariantError("correlation matrix must be square and nonempty");
    if (!Z.allFinite()) throw InvariantError("correlation matrix has non-finite entries");
    const double asym = (Z - Z.transpose()).cwiseAbs().maxCoeff();
    if (asym > kSymmetryTol)
        throw InvariantError("correlation matrix is not symmetric (max asymmetry " +
                             std::to_string(asym) + ")");
    const double diag = (Z.diagonal().array() - 1.0).abs().maxCoeff();
    if (diag > kDiagonalTol)
        throw InvariantError("correlation matrix diagonal is not 1 (max deviation " +
                             std::to_string(diag) + ")");
    Z_ = 0.5 * (Z + Z.transpose());
    Z_.diagonal().setOnes();
    const double lam = ncegeom::min_eigenvalue(Z_);
    if (lam < -kEigenTol) {
        std::ostringstream msg;
        msg << "correlation matrix is not positive semidefinite (min eigenvalue " << lam << ")";
        throw InvariantError(msg.str());
    }
}

double CorrelationMatrix::min_eigenvalue() const { return ncegeom::min_eigenvalue(Z_); }

Representation simplex_etf(int C) {
    if (C < 2) throw ArgumentError("simplex ETF needs C >= 2");
    const double scale = std::sqrt(static_cast<double>(C) / (C - 1));
    Eigen::MatrixXd U = Eigen::MatrixXd::Constant(C, C, -scale / C);
    U.diagonal().array() += scale;
    // Renormalize to absorb rounding in the scale factor.
    U.rowwise().normalize();
    return Representation(std::move(U));
}

CorrelationMatrix gram(const Representation& rep) {
    const Eigen::MatrixXd& U = rep.matrix();
    return CorrelationMatrix(U * U.transpose());
}

Representation factor(const CorrelationMatrix& Z) {
    const Eigen::MatrixXd& M = Z.matrix();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
    if (eig.eigenvalues()(0) > 1e-10) {
        Eigen::LLT<Eigen::MatrixXd> llt(M);
        if (llt.info() == Eigen::Success) {
            Eigen::MatrixXd L = llt.matrixL();
            L.rowwise().normalize();
            return Representation(std::move(L));
        }
    }
    const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
    Eigen::MatrixXd U = eig.eigenvectors() * lam.cwiseSqrt().asDiagonal();
    for (Eigen::Index c = 0; c < U.rows(); ++c) {
        const double n = U.row(c).norm();
        if (!(n > 0.0)) throw NumericError("factor: row " + std::to_string(c) + " vanished");
        U.row(c) /= n;
    }
    return Representation(std::move(U));
}

std::optional<double> equiangular_value(const CorrelationMatrix& Z, double tol) {
    const int C = Z.size();
    if (C < 2) return std::nullopt;
    const OffDiagonalStats s = off_diagonal_stats(Z.matrix());
    for (int i = 0; i < C; ++i)
        for (int j = i + 1; j < C; ++j)
            if (std::abs(Z(i, j) - s.mean) > tol) return std::nullopt;
    return s.mean;
}

CorrelationMatrix random_correlation(int C, Rng& rng) {
    Eigen::MatrixXd U(C, C);
    for (int i = 0; i < C; ++i) {
        for (int j = 0; j < C; ++j) U(i, j) = rng.normal();
        U.row(i).normalize();
    }
    return gram(Representation(std::move(U)));
}

OffDiagonalStats off_diagonal_stats(const Eigen::MatrixXd& Z) {
    const Eigen::Index C = Z.rows();
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (Eigen::Index i = 0; i < C; ++i)
        for (Eigen::Index j = i + 1; j < C; ++j) {
            sum += Z(i, j);
            ++n;
        }
    if (n == 0) return {};
    const double mean = sum / static_cast<double>(n);
    for (Eigen::Index i = 0; i < C; ++i)
        for (Eigen::Index j = i + 1; j < C; ++j) sq += (Z(i, j) - mean) * (Z(i, j) - mean);
    return {mean, std::sqrt(sq / static_cast<double>(n))};
}

}  // namespace ncegeom
