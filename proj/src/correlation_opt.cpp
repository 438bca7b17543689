#include "ncegeom/correlation_opt.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "ncegeom/format.hpp"
#include "ncegeom/rng.hpp"

namespace ncegeom {

namespace {

Eigen::MatrixXd project_psd(const Eigen::MatrixXd& R) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(R);
    const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
    Eigen::MatrixXd X = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (X + X.transpose());
}

// D^{-1/2} X D^{-1/2} of a PSD matrix: feasible whenever the diagonal is
// positive.
Eigen::MatrixXd rescale_to_unit_diagonal(const Eigen::MatrixXd& X) {
    const Eigen::VectorXd d = X.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd Z = d.asDiagonal() * X * d.asDiagonal();
    Z = 0.5 * (Z + Z.transpose());
    Z.diagonal().setOnes();
    return Z;
}

CorrelationMatrix feasible_from(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X) {
    try {
        return CorrelationMatrix(Y);
    } catch (const InvariantError&) {
        return CorrelationMatrix(rescale_to_unit_diagonal(X));
    }
}

void write_trace(const std::filesystem::path& dir, const RunResult& run) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / ("run_" + std::to_string(run.run_index) + ".csv"));
    out << "step,eta,mc_loss_estimate\n";
    for (const TracePoint& p : run.loss_trace)
        out << p.step << ',' << format_double(p.eta) << ',' << format_double(p.loss) << '\n';
}

}  // namespace

ProjectionResult project_correlation_detailed(const Eigen::MatrixXd& A, double tol,
                                              int max_iter) {
    if (A.rows() != A.cols() || A.rows() < 1)
        throw ArgumentError("projection input must be square and nonempty");
    if (!A.allFinite()) throw ArgumentError("projection input has non-finite entries");
    if (!(tol > 0.0) || max_iter < 1) throw ArgumentError("projection needs tol > 0, max_iter >= 1");
    const double asym = (A - A.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-9)
        throw ArgumentError("projection input is not symmetric (max asymmetry " +
                            std::to_string(asym) + ")");

    const Eigen::Index n = A.rows();
    Eigen::MatrixXd Y = 0.5 * (A + A.transpose());
    Eigen::MatrixXd X = Y;
    Eigen::MatrixXd correction = Eigen::MatrixXd::Zero(n, n);
    double residual = std::numeric_limits<double>::infinity();
    int it = 0;
    while (it < max_iter) {
        ++it;
        const Eigen::MatrixXd R = Y - correction;
        X = project_psd(R);
        correction = X - R;
        Eigen::MatrixXd Y_next = X;
        Y_next.diagonal().setOnes();
        residual = std::max((Y_next - Y).norm(), (X - Y_next).norm());
        Y = std::move(Y_next);
        if (residual <= tol) break;
    }
    const bool converged = residual <= tol;
    return {feasible_from(Y, X), it, residual, converged};
}

CorrelationMatrix project_correlation(const Eigen::MatrixXd& A, double tol, int max_iter) {
    ProjectionResult r = project_correlation_detailed(A, tol, max_iter);
    if (!r.converged && r.residual > 10.0 * tol)
        throw ConvergenceError("nearest-correlation projection did not converge in " +
                                   std::to_string(max_iter) + " iterations (residual " +
                                   std::to_string(r.residual) + ")",
                               std::move(r.Z), r.residual);
    return std::move(r.Z);
}

void OptimizerConfig::validate() const {
    if (steps < 1) throw ArgumentError("optimizer steps must be >= 1");
    if (runs < 1) throw ArgumentError("optimizer runs must be >= 1");
    if (!(eta0 > 0.0)) throw ArgumentError("optimizer eta0 must be positive");
    if (mode == OptimizerMode::stochastic && batch < 1)
        throw ArgumentError("optimizer batch must be >= 1");
    if (!(projection_tol > 0.0) || projection_max_iter < 1)
        throw ArgumentError("projection_tol must be positive and projection_max_iter >= 1");
    if (trace_every < 1) throw ArgumentError("trace_every must be >= 1");
}

std::string to_string(OptimizerMode mode) {
    return mode == OptimizerMode::stochastic ? "stochastic" : "exact_gradient";
}

OptimizerMode parse_optimizer_mode(const std::string& name) {
    if (name == "stochastic") return OptimizerMode::stochastic;
    if (name == "exact_gradient") return OptimizerMode::exact_gradient;
    throw ArgumentError("unknown optimizer mode '" + name + "'");
}

std::string to_string(InitMode mode) { return mode == InitMode::identity ? "identity" : "random"; }

InitMode parse_init_mode(const std::string& name) {
    if (name == "identity") return InitMode::identity;
    if (name == "random") return InitMode::random;
    throw ArgumentError("unknown init mode '" + name + "'");
}

RunResult psgd_run(const ClassDistribution& rho, int k, const LossSpec& loss,
                   const OptimizerConfig& cfg, int run_index) {
    cfg.validate();
    loss.validate_objective();
    const int C = rho.classes();
    if (cfg.mode == OptimizerMode::exact_gradient && !exact_feasible(C, k))
        throw CapacityError("exact_gradient mode is over the enumeration cap for C=" +
                            std::to_string(C) + ", k=" + std::to_string(k));

    const std::uint64_t seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(run_index)});
    Eigen::MatrixXd start = Eigen::MatrixXd::Identity(C, C);
    if (cfg.init == InitMode::random) {
        Rng rng(derive_seed(seed, {0x1417ULL}));
        start = random_correlation(C, rng).matrix();
    }
    CorrelationMatrix Z(start);
    RunResult result{Z, {}, seed, run_index, 0};
    std::optional<McGradientSampler> sampler;
    if (cfg.mode == OptimizerMode::stochastic) sampler.emplace(rho, k, loss);

    for (int t = 0; t < cfg.steps; ++t) {
        const double eta = cfg.eta0 / (t + 1.0);
        Eigen::MatrixXd g;
        double current_loss;
        if (cfg.mode == OptimizerMode::stochastic) {
            McGradient mg = (*sampler)(Z, cfg.batch, derive_seed(seed, {static_cast<std::uint64_t>(t)}),
                                       t % cfg.trace_every == 0);
            g = std::move(mg.grad);
            current_loss = mg.loss;
        } else {
            g = exact_nce_grad(Z, rho, k, loss);
            current_loss = t % cfg.trace_every == 0 ? exact_nce_loss(Z, rho, k, loss) : 0.0;
        }
        if (t % cfg.trace_every == 0) result.loss_trace.push_back({t, eta, current_loss});
        if (!g.allFinite()) throw NumericError("NCE gradient became non-finite");

        ProjectionResult p = project_correlation_detailed(Z.matrix() - eta * g, cfg.projection_tol,
                                                          cfg.projection_max_iter);
        if (!p.converged && p.residual > 10.0 * cfg.projection_tol) ++result.projection_failures;
        Z = std::move(p.Z);
    }
    result.final_Z = std::move(Z);
    if (cfg.trace_dir) write_trace(*cfg.trace_dir, result);
    return result;
}

CorrelationMatrix aggregate_runs(std::span<const RunResult> results) {
    if (results.empty()) throw ArgumentError("aggregate_runs needs at least one run");
    std::vector<const RunResult*> ordered;
    for (const RunResult& r : results) ordered.push_back(&r);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const RunResult* a, const RunResult* b) { return a->run_index < b->run_index; });
    const int C = ordered.front()->final_Z.size();
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(C, C);
    for (const RunResult* r : ordered) {
        if (r->final_Z.size() != C) throw ArgumentError("aggregate_runs: runs disagree on C");
        sum += r->final_Z.matrix();
    }
    return project_correlation(sum / static_cast<double>(ordered.size()));
}

NceOptimum solve_nce_optimal(const ClassDistribution& rho, int k, const LossSpec& loss,
                             const OptimizerConfig& cfg, int workers) {
    cfg.validate();
    loss.validate_objective();
    std::vector<std::optional<RunResult>> slots(static_cast<std::size_t>(cfg.runs));
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        for (;;) {
            const int r = next.fetch_add(1);
            if (r >= cfg.runs) return;
            try {
                slots[static_cast<std::size_t>(r)] = psgd_run(rho, k, loss, cfg, r);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = cfg.runs;
            }
        }
    };
    const int n_threads = std::clamp(workers, 1, cfg.runs);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<RunResult> runs;
    runs.reserve(slots.size());
    int failures = 0;
    for (auto& s : slots) {
        failures += s->projection_failures;
        runs.push_back(std::move(*s));
    }
    CorrelationMatrix Z = aggregate_runs(runs);
    Representation U = factor(Z);
    const NceValue value =
        evaluate_nce_loss(Z, rho, k, loss, 1'000'000, derive_seed(cfg.seed, {0xE7A1ULL}));
    return {std::move(Z), std::move(U), value, failures};
}

}  // namespace ncegeom
