// Acceptance suite: one PASS/FAIL line per numbered criterion.
//
//   acceptance --criteria 1,2,3,4,6,7,8,9,10
//   acceptance --criteria 5 --workers 4 --out build/tests/tmp/sweep.csv

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>

#include "ncegeom/bounds.hpp"
#include "ncegeom/correlation_opt.hpp"
#include "ncegeom/downstream.hpp"
#include "ncegeom/format.hpp"
#include "ncegeom/latent_model.hpp"
#include "ncegeom/losses.hpp"
#include "ncegeom/metrics.hpp"
#include "ncegeom/nce_objective.hpp"
#include "ncegeom/rng.hpp"
#include "ncegeom/sweep.hpp"

namespace {

using namespace ncegeom;
using Clock = std::chrono::steady_clock;

struct Verdict {
    bool passed = true;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

double max_offdiag_dev(const Eigen::MatrixXd& Z, double target) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < Z.rows(); ++i)
        for (Eigen::Index j = 0; j < Z.cols(); ++j)
            if (i != j) worst = std::max(worst, std::abs(Z(i, j) - target));
    return worst;
}

Verdict timed(double budget_s, Clock::time_point t0, Verdict v) {
    const double t = seconds_since(t0);
    v.detail += "; " + fmt(t) + " s (budget " + fmt(budget_s) + " s)";
    if (t > budget_s) v.passed = false;
    return v;
}

// 1. ETF recovery with exact gradients.
Verdict etf_recovery() {
    const auto t0 = Clock::now();
    OptimizerConfig cfg;
    cfg.mode = OptimizerMode::exact_gradient;
    cfg.steps = 2000;
    cfg.runs = 1;
    Verdict v;
    double worst_entry = 0.0, worst_loss = 0.0;
    for (int C : {3, 5})
        for (int k : {1, 2, 4}) {
            const ClassDistribution rho = uniform_distribution(C);
            const NceOptimum opt = solve_nce_optimal(rho, k, LossSpec::logistic(), cfg);
            const double dev = max_offdiag_dev(opt.Z.matrix(), -1.0 / (C - 1));
            const double gap = std::abs(opt.loss.value - exact_nce_loss(gram(simplex_etf(C)), rho, k,
                                                                        LossSpec::logistic()));
            worst_entry = std::max(worst_entry, dev);
            worst_loss = std::max(worst_loss, gap);
            if (dev > 0.05 || gap > 1e-3) {
                v.passed = false;
                v.detail += "C=" + std::to_string(C) + " k=" + std::to_string(k) + " off " + fmt(dev) +
                            " loss gap " + fmt(gap) + "; ";
            }
        }
    v.detail += "max entry deviation " + fmt(worst_entry) + " (tol 0.05), max loss gap " + fmt(worst_loss) +
                " (tol 1e-3)";
    return timed(120.0, t0, v);
}

// 2. k-independence of the supervised loss under uniform classes.
Verdict k_independence() {
    OptimizerConfig cfg;
    cfg.runs = 50;
    cfg.seed = 2;
    const ClassDistribution rho = uniform_distribution(4);
    std::vector<double> values;
    for (int k : {1, 4, 16}) {
        const NceOptimum opt = solve_nce_optimal(rho, k, LossSpec::logistic(), cfg);
        values.push_back(sup_loss_of_Z(opt.Z, rho, LossSpec::logistic()));
    }
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    Verdict v;
    v.passed = *hi - *lo <= 0.02;
    v.detail = "sup_loss k=1,4,16: " + fmt(values[0]) + ", " + fmt(values[1]) + ", " + fmt(values[2]) +
               "; spread " + fmt(*hi - *lo) + " (tol 0.02)";
    return v;
}

// 3. ETF dominance over random correlation matrices.
Verdict etf_dominance() {
    const auto t0 = Clock::now();
    Rng rng(3);
    Verdict v;
    double min_margin = 1e300;
    int settings = 0;
    for (int C : {3, 5}) {
        const ClassDistribution rho = uniform_distribution(C);
        const CorrelationMatrix etf = gram(simplex_etf(C));
        for (int k : {1, 2, 4})
            for (LossKind kind : {LossKind::logistic, LossKind::hinge})
                for (double beta : {0.5, 1.0, 2.0}) {
                    const LossSpec loss{kind, beta};
                    const double best = exact_nce_loss(etf, rho, k, loss);
                    ++settings;
                    for (int i = 0; i < 1000; ++i) {
                        const double m = exact_nce_loss(random_correlation(C, rng), rho, k, loss) - best;
                        min_margin = std::min(min_margin, m);
                        if (m < -1e-9) v.passed = false;
                    }
                }
    }
    v.detail = std::to_string(settings) + " settings x 1000 matrices, min margin " + fmt(min_margin) +
               " (tol -1e-9)";
    return timed(120.0, t0, v);
}

// True when some class owns two atoms that are not the same unit vector.
bool split_class(const AtomizedModel& m) {
    for (int c = 0; c < m.classes(); ++c) {
        const auto& atoms = m.atoms_of(c);
        for (int a : atoms)
            for (int b : atoms)
                if (m.zfine()(a, b) < 1.0 - 1e-12) return true;
    }
    return false;
}

// 4. Collapse to a latent-indistinguishable representation never hurts.
Verdict collapse() {
    const auto t0 = Clock::now();
    Rng rng(4);
    Verdict v;
    int strict_cases = 0;
    double min_gap = 1e300, worst_weak = -1e300;
    for (int i = 0; i < 200; ++i) {
        const int C = 2 + i % 2;
        const int k = 1 + i % 3;
        const AtomizedModel m = random_atomized_model(C, 3, rng);
        const CollapseResult r = collapse_check(m, k, LossSpec::logistic());
        const double gap = r.atomized_loss - r.best_collapsed_loss;
        worst_weak = std::max(worst_weak, -gap);
        if (gap < -1e-9) v.passed = false;
        if (split_class(m)) {
            ++strict_cases;
            min_gap = std::min(min_gap, gap);
            if (gap <= 1e-6) v.passed = false;
        }
    }
    v.detail = "200 models, " + std::to_string(strict_cases) + " with split classes, min strict gap " +
               fmt(min_gap) + " (need > 1e-6), worst excess " + fmt(worst_weak) + " (tol 1e-9)";
    return timed(60.0, t0, v);
}

// 5. The sweep: runtime and fraction of non-increasing curves.
Verdict conjecture_sweep(int workers, const std::string& out) {
    SweepConfig cfg;
    cfg.optimizer.runs = 50;
    cfg.workers = workers;
    cfg.output_path = out;
    cfg.timing = true;
    namespace fs = std::filesystem;
    for (const std::string& p : {out, out + ".partial", out + ".meta.json"}) fs::remove(p);
    const auto t0 = Clock::now();
    const SweepResult r = run_sweep_to_file(cfg, [](const SweepRow& row) {
        std::cerr << "  C=" << row.C << " alpha=" << format_double(row.alpha) << " k=" << row.k << " "
                  << (row.ok() ? "sup_loss=" + format_double(row.sup_loss) : "error: " + row.error) << '\n';
    });
    const double minutes = seconds_since(t0) / 60.0;
    const MonotonicityReport& rep = r.report;
    Verdict v;
    v.passed = minutes <= 60.0 && rep.total() == 28 && rep.non_increasing_fraction() >= 0.8;
    v.detail = std::to_string(rep.strict + rep.non_strict) + "/" + std::to_string(rep.total()) +
               " curves non-increasing within eps 0.01 (" + fmt(rep.non_increasing_fraction()) +
               ", need >= 0.8); strictly decreasing " + std::to_string(rep.strict) + "/" +
               std::to_string(rep.total()) + "; violating " + std::to_string(rep.violating) +
               ", incomplete " + std::to_string(rep.incomplete) + "; " + fmt(minutes) + " min with " +
               std::to_string(workers) + " workers (budget 60 min)";
    return v;
}

// 6. Sub-additivity of the objective losses and the square-sum counterexample.
Verdict subadditivity() {
    const auto t0 = Clock::now();
    Rng rng(6);
    const double betas[] = {0.5, 1.0, 2.0, 5.0};
    double worst = 1e300;
    for (LossKind kind : {LossKind::logistic, LossKind::hinge})
        for (int i = 0; i < 10000; ++i) {
            const LossSpec spec{kind, betas[rng() % 4]};
            const std::size_t n = 1 + rng() % 8;
            std::vector<double> v(n);
            for (double& x : v) x = 1.5 * rng.normal();
            std::vector<std::size_t> S;
            for (std::size_t j = 0; j < n; ++j)
                if (rng() & 1) S.push_back(j);
            if (S.empty()) S.push_back(rng() % n);
            worst = std::min(worst, subadditivity_margin(spec, v, S));
        }
    const std::vector<double> v01{0.0, 1.0};
    const std::vector<std::size_t> S12{0, 1};
    const double counter = subadditivity_margin(LossSpec::square_sum_test(), v01, S12);
    Verdict v;
    v.passed = worst >= -1e-9 && counter == -1.0;
    v.detail = "2 x 10000 instances, min margin " + fmt(worst) + " (tol -1e-9); square-sum margin " +
               fmt(counter) + " (want -1)";
    return timed(5.0, t0, v);
}

// 7. Monte Carlo, gradient and factorization oracles.
Verdict oracles() {
    const auto t0 = Clock::now();
    Verdict v;
    Rng rng(7);

    const ClassDistribution rho5 = uniform_distribution(5);
    std::string mc_detail;
    for (const CorrelationMatrix& Z : {gram(simplex_etf(5)), random_correlation(5, rng)}) {
        const double exact = exact_nce_loss(Z, rho5, 3, LossSpec::logistic());
        const NCEConfig cfg{3, NceMode::monte_carlo, 1'000'000, rng()};
        const McEstimate mc = mc_nce_loss(Z, rho5, 3, LossSpec::logistic(), cfg);
        const double d = std::abs(mc.estimate - exact);
        if (d > 3 * mc.std_error || d > 0.005) v.passed = false;
        mc_detail += fmt(d / mc.std_error) + " se / " + fmt(d) + " abs, ";
    }

    double worst_fd = 0.0;
    for (int i = 0; i < 100; ++i) {
        const int C = 2 + i % 4, k = 1 + i % 4;
        const Eigen::MatrixXd Z = random_correlation(C, rng).matrix();
        std::vector<double> p(static_cast<std::size_t>(C));
        double s = 0.0;
        for (double& x : p) s += (x = 0.2 + rng.uniform());
        for (double& x : p) x /= s;
        const LossSpec loss = LossSpec::logistic(0.5 + 2 * rng.uniform());
        const Eigen::MatrixXd G = detail::exact_nce_grad(Z, p, k, loss);
        for (int a = 0; a < C; ++a)
            for (int b = a + 1; b < C; ++b) {
                const double h = 1e-5;
                Eigen::MatrixXd P = Z, M = Z;
                P(a, b) += h, P(b, a) += h, M(a, b) -= h, M(b, a) -= h;
                const double fd = (detail::exact_nce_loss(P, p, k, loss) - detail::exact_nce_loss(M, p, k, loss)) / (2 * h);
                worst_fd = std::max(worst_fd, std::abs(2 * G(a, b) - fd) / std::max(std::abs(fd), 1e-6));
            }
    }
    if (worst_fd > 1e-5) v.passed = false;

    double worst_rt = 0.0;
    for (int i = 0; i < 100; ++i) {
        const CorrelationMatrix Z = random_correlation(2 + i % 8, rng);
        const Eigen::MatrixXd U = factor(Z).matrix();
        worst_rt = std::max(worst_rt, (U * U.transpose() - Z.matrix()).norm());
    }
    if (worst_rt > 1e-8) v.passed = false;

    v.detail = "MC vs exact (ETF, random): " + mc_detail + "need <= 3 se and <= 0.005; gradient rel err " +
               fmt(worst_fd) + " (tol 1e-5); roundtrip " + fmt(worst_rt) + " (tol 1e-8)";
    return timed(60.0, t0, v);
}

// 8. Projection minimality against random feasible points.
Verdict projection() {
    const auto t0 = Clock::now();
    Rng rng(8);
    Verdict v;
    double worst_eig = 1e300, worst_diag = 0.0, worst_slack = -1e300;
    for (int C : {3, 5, 8}) {
        int done = 0;
        while (done < 100) {
            Eigen::MatrixXd A = Eigen::MatrixXd::Identity(C, C);
            for (int i = 0; i < C; ++i)
                for (int j = i + 1; j < C; ++j) A(i, j) = A(j, i) = 2 * rng.uniform() - 1;
            if (min_eigenvalue(A) >= 0.0) continue;
            ++done;
            const Eigen::MatrixXd Z = project_correlation(A).matrix();
            worst_eig = std::min(worst_eig, min_eigenvalue(Z));
            worst_diag = std::max(worst_diag, (Z.diagonal().array() - 1.0).abs().maxCoeff());
            const double d = (Z - A).norm();
            for (int j = 0; j < 100; ++j)
                worst_slack = std::max(worst_slack, d - (random_correlation(C, rng).matrix() - A).norm());
        }
    }
    v.passed = worst_eig >= -1e-8 && worst_diag <= 1e-9 && worst_slack <= 1e-6;
    v.detail = "3 x 100 indefinite inputs x 100 feasible points; min eigenvalue " + fmt(worst_eig) +
               ", diagonal error " + fmt(worst_diag) + ", worst excess distance " + fmt(worst_slack) +
               " (tol 1e-6)";
    return timed(30.0, t0, v);
}

std::string collapsed_etf_csv(int C) {
    const Eigen::MatrixXd U = simplex_etf(C).matrix();
    std::ostringstream out;
    out << "label";
    for (int j = 0; j < C; ++j) out << ",x" << j;
    out << '\n';
    for (int rep = 0; rep < 2; ++rep)
        for (int c = 0; c < C; ++c) {
            out << c;
            for (int j = 0; j < C; ++j) out << ',' << format_double(U(c, j));
            out << '\n';
        }
    return out.str();
}

// 9. Bound factors, randomized bound validation and the metric anchors.
Verdict bounds_and_anchors() {
    const auto t0 = Clock::now();
    Verdict v;
    const ClassDistribution u10 = uniform_distribution(10);
    double prev = 1e300;
    bool beta_ok = true;
    for (int k = 10; k <= 200; ++k) {
        const double b = beta_improved(k, u10);
        if (b > prev || (k >= 47 && b != 4.0)) beta_ok = false;
        prev = b;
    }
    Rng rng(9);
    int violations = 0;
    for (int i = 0; i < 100; ++i) {
        const BoundReport r = validate_improved_bound(random_correlation(4, rng), uniform_distribution(4), 8,
                                                      LossSpec::logistic());
        if (!*r.improved_bound_holds) ++violations;
    }
    const double etf5 = max_offdiag_dev(gram(simplex_etf(5)).matrix(), -0.25);
    std::istringstream in(collapsed_etf_csv(100));
    const CosineSimilarity cs = cosine_similarity_matrix(load_embeddings(in));
    const double cs_err = std::abs(cs.offdiag_mean + 1.0 / 99.0);
    const double angle = angle_proxy(0.52);
    v.passed = beta_ok && violations == 0 && etf5 <= 1e-12 && cs_err <= 1e-12 &&
               std::abs(angle - 42.3) <= 0.05;
    v.detail = std::string("beta non-increasing on 10..200 and 4 from k=47: ") + (beta_ok ? "yes" : "no") +
               "; bound violations " + std::to_string(violations) + "/100; ETF(5) off-diagonal error " +
               fmt(etf5) + "; CS mean " + fmt(cs.offdiag_mean) + " (want -1/99); angle_proxy(0.52) " +
               fmt(angle) + " deg (want 42.3)";
    return timed(30.0, t0, v);
}

// 10. Metric ingestion round trip and the analytic metric checks.
Verdict metrics_ingestion() {
    Verdict v;
    Rng rng(10);
    const int n = 200, d = 16;
    Eigen::MatrixXd X(n, d);
    std::vector<std::string> labels;
    std::ostringstream csv;
    csv << "label";
    for (int j = 0; j < d; ++j) csv << ",x" << j;
    csv << '\n';
    for (int i = 0; i < n; ++i) {
        labels.push_back("class " + std::to_string(i % 7));
        csv << labels.back();
        for (int j = 0; j < d; ++j) {
            X(i, j) = rng.normal();
            csv << ',' << format_double(X(i, j));
        }
        csv << '\n';
    }
    std::istringstream in(csv.str());
    const LabeledEmbeddings e = load_embeddings(in);
    const bool exact = e.vectors == X && e.labels == labels && e.classes.size() == 7;

    std::istringstream orth_in("label,x0,x1\na,1,0\na,0,1\nb,3,4\n");
    const LabeledEmbeddings orth = load_embeddings(orth_in, {true, false});
    const bool anchors = std::abs(intra_var(orth, "a") - 0.5) <= 1e-15 &&
                         std::abs(orth.vectors(2, 0) - 0.6) <= 1e-15 && std::abs(orth.vectors(2, 1) - 0.8) <= 1e-15;
    bool rejects = false;
    try {
        std::istringstream bad("lbl,x0\na,1\n");
        load_embeddings(bad);
    } catch (const ParseError&) {
        rejects = true;
    }
    v.passed = exact && anchors && rejects;
    v.detail = std::string("round trip of 200x16 embeddings bit-exact: ") + (exact ? "yes" : "no") +
               "; Intra-Var and normalization anchors: " + (anchors ? "yes" : "no") +
               "; header mismatch rejected: " + (rejects ? "yes" : "no") +
               "; deep-network image results are not reproduced";
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::vector<int> criteria{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    int workers = 4;
    std::string out = "acceptance_sweep.csv";
    app.add_option("--criteria", criteria, "Criteria to run")->delimiter(',');
    app.add_option("--workers", workers, "Sweep worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", out, "Sweep output path");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Verdict()>>> table{
        {"ETF recovery", etf_recovery},
        {"k-independence under uniform classes", k_independence},
        {"ETF dominance", etf_dominance},
        {"latent-indistinguishable collapse", collapse},
        {"monotone supervised loss sweep", [&] { return conjecture_sweep(workers, out); }},
        {"sub-additivity", subadditivity},
        {"oracle agreement", oracles},
        {"projection minimality", projection},
        {"bounds and analytic anchors", bounds_and_anchors},
        {"metrics ingestion", metrics_ingestion},
    };
    bool all = true;
    for (int c : std::set<int>(criteria.begin(), criteria.end())) {
        if (c < 1 || c > static_cast<int>(table.size())) {
            std::cerr << "unknown criterion " << c << '\n';
            return 2;
        }
        const auto& [name, fn] = table[static_cast<std::size_t>(c - 1)];
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        all = all && v.passed;
        std::cout << (v.passed ? "PASS" : "FAIL") << "  criterion " << c << "  " << name << "  " << v.detail
                  << std::endl;
    }
    return all ? 0 : 1;
}
