#include "ncegeom/downstream.hpp"

#include <cmath>
#include <deque>
#include <vector>

#include "ncegeom/error.hpp"

namespace ncegeom {

namespace {

void check_dims(const Eigen::MatrixXd& U, const Eigen::MatrixXd& W, const ClassDistribution& rho) {
    if (U.rows() < 2) throw ArgumentError("supervised loss needs C >= 2");
    if (U.rows() != W.rows() || U.cols() != W.cols())
        throw ArgumentError("representation and heads disagree in shape");
    if (U.rows() != rho.classes())
        throw ArgumentError("representation and class distribution disagree on C");
}

// Objective and (sub)gradient on raw matrices.
double objective(const Eigen::MatrixXd& U, const Eigen::MatrixXd& W, const ClassDistribution& rho,
                 const LossSpec& loss, Eigen::MatrixXd* G) {
    const Eigen::Index C = U.rows();
    std::vector<double> v(static_cast<std::size_t>(C - 1));
    if (G) G->setZero(W.rows(), W.cols());
    double total = 0.0;
    for (Eigen::Index c = 0; c < C; ++c) {
        const double own = U.row(c).dot(W.row(c));
        std::size_t i = 0;
        for (Eigen::Index o = 0; o < C; ++o)
            if (o != c) v[i++] = own - U.row(c).dot(W.row(o));
        const double rc = rho[static_cast<std::size_t>(c)];
        total += rc * eval(loss, v);
        if (G) {
            const std::vector<double> g = grad(loss, v);
            double gsum = 0.0;
            i = 0;
            for (Eigen::Index o = 0; o < C; ++o) {
                if (o == c) continue;
                gsum += g[i];
                G->row(o) -= rc * g[i] * U.row(c);
                ++i;
            }
            G->row(c) += rc * gsum * U.row(c);
        }
    }
    return total;
}

void project_rows(Eigen::MatrixXd& W) {
    for (Eigen::Index c = 0; c < W.rows(); ++c) {
        const double n = W.row(c).norm();
        if (n > 1.0) W.row(c) /= n;
    }
}

SupOptimum finish(Eigen::MatrixXd W, double value, int iterations) {
    project_rows(W);
    return {DownstreamWeights(std::move(W)), value, iterations};
}

SupOptimum optimize_smooth(const Eigen::MatrixXd& U, const ClassDistribution& rho,
                           const LossSpec& loss, const SupOptions& opts) {
    Eigen::MatrixXd W = U;
    project_rows(W);
    Eigen::MatrixXd G;
    double f = objective(U, W, rho, loss, &G);
    double t = opts.eta;
    std::deque<double> history{f};
    int it = 0;
    for (; it < opts.iters; ++it) {
        if (!G.allFinite()) throw NumericError("supervised-loss gradient became non-finite");
        Eigen::MatrixXd Wn;
        double fn = f;
        bool moved = false;
        while (t > 1e-18) {
            Wn = W - t * G;
            project_rows(Wn);
            const Eigen::MatrixXd D = Wn - W;
            const double dd = D.squaredNorm();
            if (dd == 0.0) break;
            fn = objective(U, Wn, rho, loss, nullptr);
            if (fn <= f + (G.array() * D.array()).sum() + dd / (2.0 * t)) {
                moved = fn < f;
                break;
            }
            t *= 0.5;
        }
        if (!moved) break;
        W = std::move(Wn);
        f = objective(U, W, rho, loss, &G);
        t *= 2.0;
        history.push_back(f);
        if (history.size() > 51) history.pop_front();
        if (history.size() == 51 && history.front() - history.back() < opts.tol) break;
    }
    return finish(std::move(W), f, it);
}

SupOptimum optimize_nonsmooth(const Eigen::MatrixXd& U, const ClassDistribution& rho,
                              const LossSpec& loss, const SupOptions& opts) {
    Eigen::MatrixXd W = U;
    project_rows(W);
    Eigen::MatrixXd G;
    Eigen::MatrixXd best_W = W;
    double best = objective(U, W, rho, loss, &G);
    Eigen::MatrixXd avg = W;
    int it = 0;
    for (; it < opts.iters; ++it) {
        if (G.squaredNorm() == 0.0) break;  // zero subgradient: optimal
        W -= (opts.eta / std::sqrt(it + 1.0)) * G;
        project_rows(W);
        avg += (W - avg) / (it + 2.0);
        const double f = objective(U, W, rho, loss, &G);
        if (f < best) {
            best = f;
            best_W = W;
        }
    }
    Eigen::MatrixXd avg_proj = avg;
    project_rows(avg_proj);
    const double fa = objective(U, avg_proj, rho, loss, nullptr);
    if (fa < best) {
        best = fa;
        best_W = avg_proj;
    }
    return finish(std::move(best_W), best, it);
}

}  // namespace

DownstreamWeights::DownstreamWeights(Eigen::MatrixXd rows) : W_(std::move(rows)) {
    if (!W_.allFinite()) throw InvariantError("downstream weights have non-finite entries");
    for (Eigen::Index c = 0; c < W_.rows(); ++c)
        if (W_.row(c).norm() > 1.0 + 1e-9)
            throw InvariantError("downstream head " + std::to_string(c) + " lies outside the unit ball");
}

double sup_loss(const Representation& U, const DownstreamWeights& W, const ClassDistribution& rho,
                const LossSpec& loss) {
    loss.validate_objective();
    check_dims(U.matrix(), W.matrix(), rho);
    return objective(U.matrix(), W.matrix(), rho, loss, nullptr);
}

SupOptimum optimize_sup(const Representation& U, const ClassDistribution& rho,
                        const LossSpec& loss, const SupOptions& opts) {
    loss.validate_objective();
    if (opts.iters < 1) throw ArgumentError("optimize_sup needs iters >= 1");
    if (!(opts.eta > 0.0)) throw ArgumentError("optimize_sup needs eta > 0");
    check_dims(U.matrix(), U.matrix(), rho);
    return loss.kind == LossKind::logistic ? optimize_smooth(U.matrix(), rho, loss, opts)
                                           : optimize_nonsmooth(U.matrix(), rho, loss, opts);
}

double sup_loss_of_Z(const CorrelationMatrix& Z, const ClassDistribution& rho,
                     const LossSpec& loss, const SupOptions& opts) {
    return optimize_sup(factor(Z), rho, loss, opts).value;
}

}  // namespace ncegeom
