#pragma once

#include <Eigen/Dense>

#include "ncegeom/latent_model.hpp"
#include "ncegeom/losses.hpp"

namespace ncegeom {

/// Linear heads w_c (rows), each in the closed unit ball (tolerance 1e-9).
class DownstreamWeights {
public:
    explicit DownstreamWeights(Eigen::MatrixXd rows);

    const Eigen::MatrixXd& matrix() const noexcept { return W_; }

private:
    Eigen::MatrixXd W_;
};

/// sum_c rho_c l(<u_c . (w_c - w_c')>_{c' != c}).
double sup_loss(const Representation& U, const DownstreamWeights& W,
                const ClassDistribution& rho, const LossSpec& loss);

struct SupOptions {
    int iters = 5000;
    double eta = 1.0;
    /// Stop once the objective improves by less than this over 50 iterations.
    double tol = 1e-10;
};

struct SupOptimum {
    DownstreamWeights W;
    double value = 0.0;
    int iterations = 0;
};

/// Minimizes sup_loss over heads in the unit ball, starting from W = U.
/// Logistic: projected gradient descent with backtracking. Hinge: projected
/// subgradient descent with eta / sqrt(t + 1) steps and iterate averaging.
/// The best point seen is returned.
SupOptimum optimize_sup(const Representation& U, const ClassDistribution& rho,
                        const LossSpec& loss, const SupOptions& opts = {});

/// optimize_sup on factor(Z).
double sup_loss_of_Z(const CorrelationMatrix& Z, const ClassDistribution& rho,
                     const LossSpec& loss, const SupOptions& opts = {});

}  // namespace ncegeom
