#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ncegeom/error.hpp"
#include "ncegeom/latent_model.hpp"
#include "ncegeom/losses.hpp"
#include "ncegeom/nce_objective.hpp"

namespace ncegeom {

/// Thrown by project_correlation when max_iter is exhausted with a residual
/// above 10 * tol. Carries a feasible matrix built from the last iterate.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, CorrelationMatrix last, double residual)
        : Error(what), last_(std::move(last)), residual_(residual) {}

    const CorrelationMatrix& last_iterate() const noexcept { return last_; }
    double residual() const noexcept { return residual_; }

private:
    CorrelationMatrix last_;
    double residual_;
};

struct ProjectionResult {
    CorrelationMatrix Z;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

/// Nearest correlation matrix in Frobenius norm by alternating projections
/// onto the PSD cone (eigenvalues clipped at 0) and the unit-diagonal
/// matrices, with Dykstra's correction on the PSD step. The residual is
/// max(|Y_t - Y_{t-1}|_F, |X_t - Y_t|_F) over the unit-diagonal iterate Y
/// and the PSD iterate X. Inputs with asymmetry up to 1e-9 are symmetrized;
/// larger asymmetry is an ArgumentError.
CorrelationMatrix project_correlation(const Eigen::MatrixXd& A, double tol = 1e-8,
                                      int max_iter = 200);

/// Same iteration, never throws on non-convergence.
ProjectionResult project_correlation_detailed(const Eigen::MatrixXd& A, double tol = 1e-8,
                                              int max_iter = 200);

enum class OptimizerMode { stochastic, exact_gradient };
enum class InitMode { identity, random };

struct OptimizerConfig {
    int steps = 1000;
    int batch = 10000;
    double eta0 = 50.0;
    int runs = 400;
    OptimizerMode mode = OptimizerMode::stochastic;
    std::uint64_t seed = 0;
    double projection_tol = 1e-8;
    int projection_max_iter = 200;
    InitMode init = InitMode::identity;
    int trace_every = 50;
    /// When set, each run writes run_<index>.csv (step,eta,mc_loss_estimate).
    std::optional<std::filesystem::path> trace_dir;

    void validate() const;
};

std::string to_string(OptimizerMode mode);
OptimizerMode parse_optimizer_mode(const std::string& name);
std::string to_string(InitMode mode);
InitMode parse_init_mode(const std::string& name);

struct TracePoint {
    int step = 0;
    double eta = 0.0;
    /// Minibatch loss in stochastic mode, exact loss in exact_gradient mode.
    double loss = 0.0;
};

struct RunResult {
    CorrelationMatrix final_Z;
    std::vector<TracePoint> loss_trace;
    std::uint64_t seed_used = 0;
    int run_index = 0;
    /// Steps whose projection hit max_iter with residual above 10 * tol.
    int projection_failures = 0;
};

/// One projected (stochastic) gradient descent run with step eta0 / (t + 1).
/// The run seed is derive_seed(cfg.seed, {run_index}).
RunResult psgd_run(const ClassDistribution& rho, int k, const LossSpec& loss,
                   const OptimizerConfig& cfg, int run_index);

/// Entrywise mean ordered by run_index, then projected.
CorrelationMatrix aggregate_runs(std::span<const RunResult> results);

struct NceOptimum {
    CorrelationMatrix Z;
    Representation U;
    NceValue loss;
    int projection_failures = 0;
};

/// cfg.runs independent runs (spread over `workers` threads, each run on a
/// single thread), aggregated and factored.
NceOptimum solve_nce_optimal(const ClassDistribution& rho, int k, const LossSpec& loss,
                             const OptimizerConfig& cfg, int workers = 1);

}  // namespace ncegeom
