#include "ncegeom/verify.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "ncegeom/bounds.hpp"
#include "ncegeom/correlation_opt.hpp"
#include "ncegeom/downstream.hpp"
#include "ncegeom/error.hpp"
#include "ncegeom/format.hpp"
#include "ncegeom/latent_model.hpp"
#include "ncegeom/nce_objective.hpp"
#include "ncegeom/rng.hpp"

namespace ncegeom {

namespace {

std::string vec_str(std::span<const double> v) {
    std::string s = "(";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
    return s + ")";
}

std::string set_str(std::span<const std::size_t> S) {
    std::string s = "{";
    for (std::size_t i = 0; i < S.size(); ++i) s += (i ? "," : "") + std::to_string(S[i] + 1);
    return s + "}";
}

std::string mat_str(const Eigen::MatrixXd& M) {
    std::ostringstream out;
    out << '[';
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        out << (r ? "; " : "");
        for (Eigen::Index c = 0; c < M.cols(); ++c) out << (c ? " " : "") << format_double(M(r, c));
    }
    out << ']';
    return out.str();
}

std::vector<double> random_vector(Rng& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (double& x : v) x = lo + (hi - lo) * rng.uniform();
    return v;
}

std::size_t uniform_index(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

// Nonempty random subset of {0..t-1}, sorted.
std::vector<std::size_t> random_subset(Rng& rng, std::size_t t) {
    std::vector<std::size_t> S;
    while (S.empty())
        for (std::size_t i = 0; i < t; ++i)
            if (rng.uniform() < 0.5) S.push_back(i);
    return S;
}

ClassDistribution random_rho(Rng& rng, int C) {
    return dirichlet_sample(C, 1.0, rng());
}

// Sum over all (c, c_1..c_k) tuples; independent of the composition code.
double brute_force_nce(const Eigen::MatrixXd& Z, const std::vector<double>& rho, int k,
                       const LossSpec& loss) {
    const int C = static_cast<int>(rho.size());
    std::vector<int> idx(static_cast<std::size_t>(k), 0);
    std::vector<double> v(static_cast<std::size_t>(k));
    double total = 0.0;
    for (int c = 0; c < C; ++c) {
        std::fill(idx.begin(), idx.end(), 0);
        for (;;) {
            double w = rho[static_cast<std::size_t>(c)];
            for (int i = 0; i < k; ++i) {
                const int ci = idx[static_cast<std::size_t>(i)];
                w *= rho[static_cast<std::size_t>(ci)];
                v[static_cast<std::size_t>(i)] = 1.0 - Z(c, ci);
            }
            total += w * eval(loss, v);
            int pos = 0;
            while (pos < k && ++idx[static_cast<std::size_t>(pos)] == C) idx[static_cast<std::size_t>(pos++)] = 0;
            if (pos == k) break;
        }
    }
    return total;
}

struct Suite {
    const VerifyOptions& opts;
    bool full;
    int scale;  // sample multiplier for the full level

    Rng rng_for(std::uint64_t id) const { return Rng(derive_seed(opts.seed, {id})); }

    CheckResult loss_grad_fd() const {
        Rng rng = rng_for(1);
        const int n = 1000 * scale;
        double worst = 0.0;
        for (int it = 0; it < n; ++it) {
            const double beta = std::array{0.5, 1.0, 2.0, 5.0}[uniform_index(rng, 4)];
            const LossSpec spec = LossSpec::logistic(beta);
            std::vector<double> v = random_vector(rng, 1 + uniform_index(rng, 6), -2.0, 2.0);
            const std::vector<double> g = grad(spec, v);
            for (std::size_t i = 0; i < v.size(); ++i) {
                const double h = 1e-5;
                std::vector<double> vp = v, vm = v;
                vp[i] += h;
                vm[i] -= h;
                const double fd = (eval(spec, vp) - eval(spec, vm)) / (2.0 * h);
                const double rel = std::abs(g[i] - fd) / std::max(std::abs(fd), 1e-4);
                worst = std::max(worst, rel);
                if (rel > 1e-6)
                    return {"losses.grad_fd", false,
                            "logistic beta=" + format_double(beta) + " v=" + vec_str(v) + " coord " +
                                std::to_string(i + 1) + ": grad " + format_double(g[i]) + " vs fd " +
                                format_double(fd)};
            }
        }
        return {"losses.grad_fd", true, std::to_string(n) + " points, worst rel err " + format_double(worst)};
    }

    CheckResult loss_convexity() const {
        Rng rng = rng_for(2);
        const int n = 2000 * scale;
        for (int it = 0; it < n; ++it) {
            const LossSpec spec = it % 2 ? LossSpec::hinge(1.0 + rng.uniform()) : LossSpec::logistic(0.5 + 2 * rng.uniform());
            const std::size_t t = 1 + uniform_index(rng, 5);
            const auto a = random_vector(rng, t, -3.0, 3.0);
            const auto b = random_vector(rng, t, -3.0, 3.0);
            const double lam = rng.uniform();
            std::vector<double> m(t);
            for (std::size_t i = 0; i < t; ++i) m[i] = lam * a[i] + (1 - lam) * b[i];
            const double lhs = eval(spec, m);
            const double rhs = lam * eval(spec, a) + (1 - lam) * eval(spec, b);
            if (lhs > rhs + 1e-9)
                return {"losses.convexity", false,
                        to_string(spec.kind) + " a=" + vec_str(a) + " b=" + vec_str(b) +
                            " lambda=" + format_double(lam)};
        }
        return {"losses.convexity", true, std::to_string(n) + " triples"};
    }

    CheckResult loss_monotone() const {
        Rng rng = rng_for(3);
        const int n = 2000 * scale;
        for (int it = 0; it < n; ++it) {
            const LossSpec spec = it % 2 ? LossSpec::hinge(1.0) : LossSpec::logistic(1.0);
            auto v = random_vector(rng, 1 + uniform_index(rng, 5), -3.0, 3.0);
            const double base = eval(spec, v);
            auto up = v;
            up[uniform_index(rng, v.size())] += rng.uniform() * 2.0;
            auto longer = v;
            longer.push_back(-3.0 + 6.0 * rng.uniform());
            if (eval(spec, up) > base + 1e-12)
                return {"losses.monotone", false, "increasing a coordinate raised the loss at " + vec_str(v)};
            if (eval(spec, longer) < base - 1e-12)
                return {"losses.monotone", false, "appending a coordinate lowered the loss at " + vec_str(v)};
        }
        return {"losses.monotone", true, std::to_string(n) + " coordinate and append probes"};
    }

    CheckResult subadditivity() const {
        Rng rng = rng_for(4);
        const int n = full ? 10000 : 2000;
        double worst = std::numeric_limits<double>::infinity();
        int count = 0;
        for (int it = 0; it < n; ++it)
            for (LossKind kind : {LossKind::logistic, LossKind::hinge}) {
                const double beta = std::array{0.5, 1.0, 2.0, 5.0}[uniform_index(rng, 4)];
                const LossSpec spec{kind, beta};
                const auto v = random_vector(rng, 1 + uniform_index(rng, 6), -2.0, 2.0);
                const auto S = random_subset(rng, v.size());
                const double m = subadditivity_margin(spec, v, S);
                worst = std::min(worst, m);
                ++count;
                if (m < -1e-9)
                    return {"losses.subadditivity", false,
                            to_string(kind) + " beta=" + format_double(beta) + " v=" + vec_str(v) +
                                " S=" + set_str(S) + " margin " + format_double(m)};
            }
        return {"losses.subadditivity", true,
                std::to_string(count) + " instances, min margin " + format_double(worst)};
    }

    CheckResult square_sum_counterexample() const {
        const std::vector<double> v{0.0, 1.0};
        const std::vector<std::size_t> S{0, 1};
        const double m = subadditivity_margin(LossSpec::square_sum_test(), v, S);
        return {"losses.square_sum_counterexample", m == -1.0,
                "expected violation: margin " + format_double(m) + " at v=(0,1), S={1,2}"};
    }

    CheckResult nce_bruteforce() const {
        Rng rng = rng_for(5);
        const int n = 20 * scale;
        double worst = 0.0;
        for (int it = 0; it < n; ++it) {
            const int C = 2 + static_cast<int>(uniform_index(rng, 3));
            const int k = 1 + static_cast<int>(uniform_index(rng, 3));
            const LossSpec spec = it % 2 ? LossSpec::hinge(1.5) : LossSpec::logistic(1.0);
            const CorrelationMatrix Z = random_correlation(C, rng);
            const ClassDistribution rho = random_rho(rng, C);
            const double a = exact_nce_loss(Z, rho, k, spec);
            const double b = brute_force_nce(Z.matrix(), rho.probs(), k, spec);
            worst = std::max(worst, std::abs(a - b));
            if (std::abs(a - b) > 1e-12 * std::max(1.0, std::abs(b)))
                return {"nce.exact_vs_bruteforce", false,
                        "C=" + std::to_string(C) + " k=" + std::to_string(k) + " Z=" + mat_str(Z.matrix()) +
                            ": " + format_double(a) + " vs " + format_double(b)};
        }
        return {"nce.exact_vs_bruteforce", true, std::to_string(n) + " instances, max diff " + format_double(worst)};
    }

    CheckResult nce_grad_fd() const {
        const NceGradFn g = opts.nce_grad ? opts.nce_grad : NceGradFn(&detail::exact_nce_grad);
        Rng rng = rng_for(6);
        const int n = 100;
        double worst = 0.0;
        for (int it = 0; it < n; ++it) {
            const int C = 3 + static_cast<int>(uniform_index(rng, 3));
            const int k = 1 + static_cast<int>(uniform_index(rng, 3));
            const LossSpec spec = LossSpec::logistic(std::array{0.5, 1.0, 2.0}[uniform_index(rng, 3)]);
            const Eigen::MatrixXd Z = random_correlation(C, rng).matrix();
            const std::vector<double> rho = random_rho(rng, C).probs();
            const Eigen::MatrixXd G = g(Z, rho, k, spec);
            const double h = 1e-5;
            for (int i = 0; i < C; ++i)
                for (int j = i + 1; j < C; ++j) {
                    Eigen::MatrixXd Zp = Z, Zm = Z;
                    Zp(i, j) += h;
                    Zp(j, i) += h;
                    Zm(i, j) -= h;
                    Zm(j, i) -= h;
                    const double fd = (detail::exact_nce_loss(Zp, rho, k, spec) -
                                       detail::exact_nce_loss(Zm, rho, k, spec)) /
                                      (2.0 * h);
                    const double analytic = 2.0 * G(i, j);
                    const double rel = std::abs(analytic - fd) / std::max(std::abs(fd), 1e-6);
                    worst = std::max(worst, rel);
                    if (rel > 1e-5)
                        return {"nce.grad_fd", false,
                                "pair (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ") C=" +
                                    std::to_string(C) + " k=" + std::to_string(k) + ": 2*grad " +
                                    format_double(analytic) + " vs fd " + format_double(fd) +
                                    " at Z=" + mat_str(Z)};
                }
        }
        return {"nce.grad_fd", true, std::to_string(n) + " instances, worst rel err " + format_double(worst)};
    }

    CheckResult nce_mc_vs_exact() const {
        Rng rng = rng_for(7);
        const int C = 5, k = 3;
        const CorrelationMatrix Z = random_correlation(C, rng);
        const ClassDistribution rho = random_rho(rng, C);
        const LossSpec spec = LossSpec::logistic(1.0);
        const double exact = exact_nce_loss(Z, rho, k, spec);
        const NCEConfig cfg{k, NceMode::monte_carlo, full ? 1'000'000 : 200'000, rng()};
        const McEstimate mc = mc_nce_loss(Z, rho, k, spec, cfg);
        const double diff = std::abs(mc.estimate - exact);
        const bool ok = diff <= 3.0 * mc.std_error && diff <= 0.005;
        return {"nce.mc_vs_exact", ok,
                "exact " + format_double(exact) + ", mc " + format_double(mc.estimate) + " +- " +
                    format_double(mc.std_error) + " (" + std::to_string(cfg.mc_samples) + " samples)"};
    }

    CheckResult etf_dominance() const {
        Rng rng = rng_for(8);
        const int per = full ? 1000 : 100;
        int count = 0;
        for (int C : {3, 5})
            for (int k : {1, 2, 4}) {
                if (!full && k == 4) continue;
                const ClassDistribution rho = uniform_distribution(C);
                const CorrelationMatrix etf = gram(simplex_etf(C));
                for (LossKind kind : {LossKind::logistic, LossKind::hinge})
                    for (double beta : {0.5, 1.0, 2.0}) {
                        const LossSpec spec{kind, beta};
                        const double base = exact_nce_loss(etf, rho, k, spec);
                        for (int it = 0; it < per; ++it) {
                            const CorrelationMatrix Z = random_correlation(C, rng);
                            ++count;
                            if (base > exact_nce_loss(Z, rho, k, spec) + 1e-9)
                                return {"nce.etf_dominance", false,
                                        to_string(kind) + " beta=" + format_double(beta) + " C=" +
                                            std::to_string(C) + " k=" + std::to_string(k) +
                                            " beats the ETF at Z=" + mat_str(Z.matrix())};
                        }
                    }
            }
        return {"nce.etf_dominance", true, std::to_string(count) + " random correlation matrices"};
    }

    CheckResult collapse() const {
        Rng rng = rng_for(9);
        const int n = full ? 200 : 40;
        double min_gap = std::numeric_limits<double>::infinity();
        for (int it = 0; it < n; ++it) {
            const int C = 2 + static_cast<int>(uniform_index(rng, 2));
            const int k = 1 + static_cast<int>(uniform_index(rng, 3));
            const AtomizedModel model = random_atomized_model(C, 3, rng);
            const CollapseResult r = collapse_check(model, k, LossSpec::logistic(1.0));
            const double gap = r.atomized_loss - r.best_collapsed_loss;
            const bool spread = model.atoms() > C;
            if (gap < -1e-9)
                return {"nce.collapse", false,
                        "collapsed loss " + format_double(r.best_collapsed_loss) + " exceeds atomized " +
                            format_double(r.atomized_loss) + " C=" + std::to_string(C) +
                            " k=" + std::to_string(k) + " Zfine=" + mat_str(model.zfine().matrix())};
            if (spread) min_gap = std::min(min_gap, gap);
        }
        return {"nce.collapse", true,
                std::to_string(n) + " atomized models, min gap " + format_double(min_gap)};
    }

    CheckResult projection_minimality() const {
        Rng rng = rng_for(10);
        const int n = full ? 100 : 20;
        for (int it = 0; it < n; ++it) {
            const int C = std::array{3, 5, 8}[uniform_index(rng, 3)];
            Eigen::MatrixXd A;
            do {
                A = Eigen::MatrixXd::Identity(C, C);
                for (int i = 0; i < C; ++i)
                    for (int j = i + 1; j < C; ++j) A(i, j) = A(j, i) = -1.0 + 2.0 * rng.uniform();
            } while (min_eigenvalue(A) >= 0.0);
            const CorrelationMatrix P = project_correlation(A);
            const double dist = (P.matrix() - A).norm();
            if (P.min_eigenvalue() < -1e-8)
                return {"projection.minimality", false, "infeasible output for A=" + mat_str(A)};
            for (int q = 0; q < 100; ++q) {
                const CorrelationMatrix Q = random_correlation(C, rng);
                if (dist > (Q.matrix() - A).norm() + 1e-6)
                    return {"projection.minimality", false,
                            "a random feasible point is closer to A=" + mat_str(A)};
            }
        }
        return {"projection.minimality", true, std::to_string(n) + " indefinite inputs x 100 feasible points"};
    }

    CheckResult factor_roundtrip() const {
        Rng rng = rng_for(11);
        double worst = 0.0;
        for (int it = 0; it < 100; ++it) {
            const int C = 2 + static_cast<int>(uniform_index(rng, 8));
            const CorrelationMatrix Z = random_correlation(C, rng);
            const double err = (gram(factor(Z)).matrix() - Z.matrix()).norm();
            worst = std::max(worst, err);
            if (err > 1e-8)
                return {"latent.factor_roundtrip", false, "error " + format_double(err) + " at Z=" + mat_str(Z.matrix())};
        }
        return {"latent.factor_roundtrip", true, "100 matrices, max Frobenius error " + format_double(worst)};
    }

    CheckResult bounds_beta() const {
        const ClassDistribution rho = uniform_distribution(10);
        double prev = std::numeric_limits<double>::infinity();
        for (int k = 10; k <= 200; ++k) {
            const double b = beta_improved(k, rho);
            if (b > prev) return {"bounds.beta_uniform", false, "beta increases at k=" + std::to_string(k)};
            if (k >= 47 && b != 4.0)
                return {"bounds.beta_uniform", false, "beta(" + std::to_string(k) + ") = " + format_double(b) + ", expected 4"};
            prev = b;
        }
        return {"bounds.beta_uniform", true, "uniform C=10: non-increasing on 10..200, equal to 4 from k=47"};
    }

    CheckResult bounds_validation() const {
        Rng rng = rng_for(12);
        const int n = full ? 100 : 20;
        const ClassDistribution rho = uniform_distribution(4);
        for (int it = 0; it < n; ++it) {
            const CorrelationMatrix Z = random_correlation(4, rng);
            const BoundReport r = validate_improved_bound(Z, rho, 8, LossSpec::logistic(1.0));
            if (!r.improved_bound_holds.value_or(false))
                return {"bounds.improved_bound", false,
                        "sup " + format_double(*r.measured_sup) + " > beta*nce " +
                            format_double(r.beta_improved * *r.measured_nce) + " at Z=" + mat_str(Z.matrix())};
        }
        return {"bounds.improved_bound", true, std::to_string(n) + " random matrices, uniform C=4, k=8"};
    }

    CheckResult sup_optimality() const {
        Rng rng = rng_for(13);
        const int n = full ? 20 : 5;
        for (int it = 0; it < n; ++it) {
            const int C = 3;
            const CorrelationMatrix Z = random_correlation(C, rng);
            const Representation U = factor(Z);
            const ClassDistribution rho = random_rho(rng, C);
            const LossSpec spec = LossSpec::logistic(1.0);
            const SupOptimum best = optimize_sup(U, rho, spec);
            for (int q = 0; q < 200; ++q) {
                Eigen::MatrixXd W(C, U.dim());
                for (Eigen::Index r = 0; r < W.rows(); ++r) {
                    for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = rng.normal();
                    W.row(r) *= std::sqrt(rng.uniform()) / W.row(r).norm();
                }
                const double v = sup_loss(U, DownstreamWeights(W), rho, spec);
                if (v < best.value - 1e-9)
                    return {"downstream.sup_optimality", false,
                            "random heads reach " + format_double(v) + " below optimum " + format_double(best.value)};
            }
        }
        return {"downstream.sup_optimality", true, std::to_string(n) + " representations x 200 random heads"};
    }

    CheckResult pipeline() const {
        OptimizerConfig cfg;
        cfg.runs = 400;
        cfg.seed = derive_seed(opts.seed, {14});
        const NceOptimum opt = solve_nce_optimal(uniform_distribution(3), 2, LossSpec::logistic(1.0), cfg);
        const OffDiagonalStats s = off_diagonal_stats(opt.Z.matrix());
        const bool ok = std::abs(s.mean + 0.5) <= 0.05 && s.std <= 0.05;
        return {"pipeline.c3_400_runs", ok,
                "off-diagonal mean " + format_double(s.mean) + " std " + format_double(s.std) +
                    " (ETF -0.5), nce " + format_double(opt.loss.value)};
    }
};

template <class F>
CheckResult guarded(const std::string& name, F&& f) {
    try {
        return f();
    } catch (const std::exception& e) {
        return {name, false, std::string("threw: ") + e.what()};
    }
}

}  // namespace

VerifyLevel parse_verify_level(const std::string& name) {
    if (name == "quick") return VerifyLevel::quick;
    if (name == "full") return VerifyLevel::full;
    throw ArgumentError("unknown verify level '" + name + "' (expected quick or full)");
}

bool VerifyReport::all_passed() const noexcept {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

const CheckResult* VerifyReport::find(const std::string& name) const noexcept {
    for (const CheckResult& c : checks)
        if (c.name == name) return &c;
    return nullptr;
}

void VerifyReport::print(std::ostream& out) const {
    std::size_t width = 0;
    for (const CheckResult& c : checks) width = std::max(width, c.name.size());
    for (const CheckResult& c : checks)
        out << (c.passed ? "PASS  " : "FAIL  ") << std::left << std::setw(static_cast<int>(width))
            << c.name << "  " << c.detail << '\n';
}

VerifyReport run_verify(const VerifyOptions& opts) {
    const bool full = opts.level == VerifyLevel::full;
    const Suite suite{opts, full, full ? 10 : 1};
    VerifyReport report;
    auto add = [&](const std::string& name, auto member) {
        report.checks.push_back(guarded(name, [&] { return (suite.*member)(); }));
    };
    add("losses.grad_fd", &Suite::loss_grad_fd);
    add("losses.convexity", &Suite::loss_convexity);
    add("losses.monotone", &Suite::loss_monotone);
    add("losses.subadditivity", &Suite::subadditivity);
    add("losses.square_sum_counterexample", &Suite::square_sum_counterexample);
    add("nce.exact_vs_bruteforce", &Suite::nce_bruteforce);
    add("nce.grad_fd", &Suite::nce_grad_fd);
    add("nce.mc_vs_exact", &Suite::nce_mc_vs_exact);
    add("nce.etf_dominance", &Suite::etf_dominance);
    add("nce.collapse", &Suite::collapse);
    add("projection.minimality", &Suite::projection_minimality);
    add("latent.factor_roundtrip", &Suite::factor_roundtrip);
    add("bounds.beta_uniform", &Suite::bounds_beta);
    add("bounds.improved_bound", &Suite::bounds_validation);
    add("downstream.sup_optimality", &Suite::sup_optimality);
    if (full) add("pipeline.c3_400_runs", &Suite::pipeline);
    return report;
}

}  // namespace ncegeom
