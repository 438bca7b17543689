// ncegeom: NCE-optimal representations over correlation matrices.
//
//   ncegeom etf 5
//   ncegeom eval --z etf.csv --rho uniform:5 --k 3
//   ncegeom sweep --config sweep.json --out results/sweep.csv --workers 4
//   ncegeom verify --level quick
//   ncegeom bounds --rho uniform:10 --k 10:200
//   ncegeom metrics embeddings.csv --normalize

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cli_io.hpp"
#include "ncegeom/bounds.hpp"
#include "ncegeom/correlation_opt.hpp"
#include "ncegeom/downstream.hpp"
#include "ncegeom/error.hpp"
#include "ncegeom/format.hpp"
#include "ncegeom/latent_model.hpp"
#include "ncegeom/metrics.hpp"
#include "ncegeom/nce_objective.hpp"
#include "ncegeom/sweep.hpp"
#include "ncegeom/verify.hpp"

namespace {

using namespace ncegeom;
using json = nlohmann::json;

struct Globals {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> format;
    std::optional<int> workers;
    std::optional<std::string> config;

    OutputFormat output_format() const {
        return format ? parse_output_format(*format) : OutputFormat::csv;
    }
};

// Writes to --out when given, else stdout.
void emit(const Globals& g, const std::string& text) {
    if (g.out) {
        std::ofstream f(*g.out, std::ios::trunc);
        if (!f) throw Error("cannot open '" + *g.out + "' for writing");
        f << text;
    } else {
        std::cout << text;
    }
}

json matrix_json(const Eigen::MatrixXd& M) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
        rows.push_back(row);
    }
    return rows;
}

std::string matrix_csv(const Eigen::MatrixXd& M) {
    std::ostringstream out;
    write_csv_matrix(out, M);
    return out.str();
}

json loss_json(const LossSpec& loss) { return {{"kind", to_string(loss.kind)}, {"beta", loss.beta}}; }

// --- etf -------------------------------------------------------------------

struct EtfArgs {
    int C = 0;
    std::optional<std::string> embeddings;
};

int cmd_etf(const Globals& g, const EtfArgs& a) {
    const Representation U = simplex_etf(a.C);
    const CorrelationMatrix Z = gram(U);
    if (g.output_format() == OutputFormat::json_lines) {
        json j{{"C", a.C}, {"gram", matrix_json(Z.matrix())}, {"embedding", matrix_json(U.matrix())}};
        emit(g, j.dump() + "\n");
    } else {
        emit(g, matrix_csv(Z.matrix()));
    }
    if (a.embeddings) {
        std::ofstream f(*a.embeddings, std::ios::trunc);
        if (!f) throw Error("cannot open '" + *a.embeddings + "' for writing");
        write_csv_matrix(f, U.matrix());
    }
    return 0;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
    std::string z_file;
    std::string rho;
    int k = 1;
    std::string loss = "logistic";
    double beta = 1.0;
    std::int64_t mc_samples = 1'000'000;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
    const CorrelationMatrix Z(cli::read_matrix_file(a.z_file));
    const ClassDistribution rho = cli::parse_rho_spec(a.rho);
    if (rho.classes() != Z.size())
        throw ArgumentError("Z is " + std::to_string(Z.size()) + "x" + std::to_string(Z.size()) +
                            " but the class distribution has " + std::to_string(rho.classes()) +
                            " classes");
    const LossSpec loss = cli::make_loss(a.loss, a.beta);
    const std::uint64_t seed = g.seed.value_or(0);
    const NceValue nce = evaluate_nce_loss(Z, rho, a.k, loss, a.mc_samples, seed);
    const SupOptimum sup = optimize_sup(factor(Z), rho, loss);
    json j;
    j["C"] = Z.size();
    j["k"] = a.k;
    j["loss"] = loss_json(loss);
    j["nce_loss"] = nce.value;
    j["nce_std_error"] = nce.std_error;
    j["mode"] = nce.exact ? "exact" : "monte_carlo";
    j["mc_samples"] = nce.exact ? 0 : a.mc_samples;
    j["seed"] = seed;
    j["sup_loss"] = sup.value;
    j["sup_iterations"] = sup.iterations;
    j["min_eigenvalue"] = Z.min_eigenvalue();
    emit(g, (g.format && g.output_format() == OutputFormat::json_lines ? j.dump() : j.dump(2)) + "\n");
    return 0;
}

// --- sweep -----------------------------------------------------------------

struct SweepArgs {
    std::optional<std::string> C_list, alpha_list, k_list;
    std::optional<int> runs, steps, batch;
    std::optional<std::string> mode;
    std::optional<double> epsilon;
    bool uniform = false;
    bool timing = false;
    bool quiet = false;
};

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    for (const std::string& cell : split_csv_line(s)) {
        double x = 0.0;
        if (!parse_double(cell, x)) throw ArgumentError("bad number '" + cell + "'");
        out.push_back(x);
    }
    return out;
}

int cmd_sweep(const Globals& g, const SweepArgs& a) {
    SweepConfig cfg;
    if (g.config) {
        std::ifstream in(*g.config);
        if (!in) throw ArgumentError("cannot open config '" + *g.config + "'");
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw ParseError(std::string("config is not valid JSON: ") + e.what(), 0);
        }
        cfg = SweepConfig::from_json(j);
    }
    if (g.seed) cfg.root_seed = *g.seed;
    if (g.out) cfg.output_path = *g.out;
    if (g.format) cfg.output_format = parse_output_format(*g.format);
    if (g.workers) cfg.workers = *g.workers;
    if (a.C_list) cfg.C_list = cli::parse_k_spec(*a.C_list);
    if (a.alpha_list) cfg.alpha_list = parse_double_list(*a.alpha_list);
    if (a.k_list) cfg.k_list = cli::parse_k_spec(*a.k_list);
    if (a.runs) cfg.optimizer.runs = *a.runs;
    if (a.steps) cfg.optimizer.steps = *a.steps;
    if (a.batch) cfg.optimizer.batch = *a.batch;
    if (a.mode) cfg.optimizer.mode = parse_optimizer_mode(*a.mode);
    if (a.epsilon) cfg.epsilon = *a.epsilon;
    if (a.uniform) cfg.uniform = true;
    if (a.timing) cfg.timing = true;
    cfg.validate();

    const RowCallback progress = [&](const SweepRow& r) {
        if (a.quiet) return;
        std::cerr << "C=" << r.C << " alpha=" << format_double(r.alpha) << " k=" << r.k << "  "
                  << (r.ok() ? "sup_loss=" + format_double(r.sup_loss) : "error: " + r.error) << '\n';
    };
    SweepResult result;
    if (cfg.output_path) {
        result = run_sweep_to_file(cfg, progress);
    } else {
        result = run_sweep(cfg, {}, progress);
        write_sweep_rows(std::cout, result.rows, cfg.output_format);
    }
    const MonotonicityReport& rep = result.report;
    std::cerr << "curves " << rep.total() << ": strict " << rep.strict << ", non-strict "
              << rep.non_strict << ", violating " << rep.violating << ", incomplete "
              << rep.incomplete << " (epsilon " << format_double(rep.epsilon)
              << "); non-increasing fraction " << format_double(rep.non_increasing_fraction())
              << '\n';
    return 0;
}

// --- verify ----------------------------------------------------------------

int cmd_verify(const Globals& g, const std::string& level) {
    VerifyOptions opts;
    opts.level = parse_verify_level(level);
    opts.seed = g.seed.value_or(0);
    const VerifyReport report = run_verify(opts);
    std::ostringstream out;
    report.print(out);
    emit(g, out.str());
    return report.all_passed() ? 0 : 1;
}

// --- bounds ----------------------------------------------------------------

struct BoundsArgs {
    std::string rho;
    std::string k;
    std::string loss = "logistic";
    double beta = 1.0;
    std::optional<std::string> z_file;
};

int cmd_bounds(const Globals& g, const BoundsArgs& a) {
    const ClassDistribution rho = cli::parse_rho_spec(a.rho);
    const LossSpec loss = cli::make_loss(a.loss, a.beta);
    std::optional<CorrelationMatrix> Z;
    if (a.z_file) {
        Z.emplace(cli::read_matrix_file(*a.z_file));
        if (Z->size() != rho.classes()) throw ArgumentError("Z and the class distribution disagree on C");
    }
    std::ostringstream out;
    const bool jl = g.output_format() == OutputFormat::json_lines;
    if (!jl) out << BoundReport::csv_header() << '\n';
    for (int k : cli::parse_k_spec(a.k)) {
        const BoundReport r = Z ? validate_improved_bound(*Z, rho, k, loss) : bound_factors(k, rho);
        out << (jl ? r.to_json().dump() : r.csv_row()) << '\n';
    }
    emit(g, out.str());
    return 0;
}

// --- metrics ---------------------------------------------------------------

struct MetricsArgs {
    std::string file;
    bool normalize = false;
    bool strict_unit_norm = false;
};

int cmd_metrics(const Globals& g, const MetricsArgs& a) {
    std::ifstream in(a.file);
    if (!in) throw ArgumentError("cannot open '" + a.file + "'");
    const LabeledEmbeddings emb = load_embeddings(in, {a.normalize, a.strict_unit_norm});
    if (g.output_format() == OutputFormat::json_lines)
        emit(g, metrics_json(emb).dump() + "\n");
    else
        emit(g, metrics_csv(emb));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"NCE-optimal representations over correlation matrices"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--seed", g.seed, "Root seed (u64)");
    app.add_option("--out", g.out, "Output path (stdout when omitted)");
    app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"csv", "json_lines"}));
    app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--config", g.config, "JSON config document")->check(CLI::ExistingFile);

    EtfArgs etf;
    auto* etf_cmd = app.add_subcommand("etf", "Print the simplex ETF Gram matrix");
    etf_cmd->add_option("C", etf.C, "Number of classes")->required();
    etf_cmd->add_option("--embeddings", etf.embeddings, "Also write the embedding rows as CSV");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate NCE and supervised losses of a Gram matrix");
    eval_cmd->add_option("--z", ev.z_file, "Headerless CSV correlation matrix")->required();
    eval_cmd->add_option("--rho", ev.rho, "uniform:C, inline list or CSV file")->required();
    eval_cmd->add_option("--k", ev.k, "Number of negatives")->required();
    eval_cmd->add_option("--loss", ev.loss, "logistic or hinge")->check(CLI::IsMember({"logistic", "hinge"}));
    eval_cmd->add_option("--beta", ev.beta, "Loss scale");
    eval_cmd->add_option("--mc-samples", ev.mc_samples, "Samples when exact enumeration is over cap");

    SweepArgs sw;
    auto* sweep_cmd = app.add_subcommand("sweep", "Run the (C, alpha, k) sweep");
    sweep_cmd->add_option("--C-list", sw.C_list, "Class counts, e.g. 3:9 or 3,5");
    sweep_cmd->add_option("--alpha-list", sw.alpha_list, "Dirichlet concentrations, e.g. 1,2,3,4");
    sweep_cmd->add_option("--k-list", sw.k_list, "Negative counts, e.g. 1,2,4,8");
    sweep_cmd->add_option("--runs", sw.runs, "Runs per cell");
    sweep_cmd->add_option("--steps", sw.steps, "Steps per run");
    sweep_cmd->add_option("--batch", sw.batch, "Minibatch size");
    sweep_cmd->add_option("--mode", sw.mode, "stochastic or exact_gradient");
    sweep_cmd->add_option("--epsilon", sw.epsilon, "Monotonicity tolerance");
    sweep_cmd->add_flag("--uniform", sw.uniform, "Uniform class distributions");
    sweep_cmd->add_flag("--timing", sw.timing, "Record wall_ms per cell");
    sweep_cmd->add_flag("--quiet", sw.quiet, "No per-cell progress on stderr");

    std::string level = "quick";
    auto* verify_cmd = app.add_subcommand("verify", "Run the oracle and property suite");
    verify_cmd->add_option("--level", level, "quick or full")->check(CLI::IsMember({"quick", "full"}));

    BoundsArgs bd;
    auto* bounds_cmd = app.add_subcommand("bounds", "Report loss-transfer bound factors");
    bounds_cmd->add_option("--rho", bd.rho, "uniform:C, inline list or CSV file")->required();
    bounds_cmd->add_option("--k", bd.k, "k, lo:hi or a list")->required();
    bounds_cmd->add_option("--loss", bd.loss, "logistic or hinge")->check(CLI::IsMember({"logistic", "hinge"}));
    bounds_cmd->add_option("--beta", bd.beta, "Loss scale");
    bounds_cmd->add_option("--z", bd.z_file, "Correlation matrix to validate the bound on");

    MetricsArgs mt;
    auto* metrics_cmd = app.add_subcommand("metrics", "Structure metrics of labeled embeddings");
    metrics_cmd->add_option("file", mt.file, "CSV with header label,x0,...")->required();
    metrics_cmd->add_flag("--normalize", mt.normalize, "Scale vectors to unit norm");
    metrics_cmd->add_flag("--strict-unit-norm", mt.strict_unit_norm, "Reject vectors off the unit sphere");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*etf_cmd) return cmd_etf(g, etf);
        if (*eval_cmd) return cmd_eval(g, ev);
        if (*sweep_cmd) return cmd_sweep(g, sw);
        if (*verify_cmd) return cmd_verify(g, level);
        if (*bounds_cmd) return cmd_bounds(g, bd);
        if (*metrics_cmd) return cmd_metrics(g, mt);
    } catch (const ncegeom::ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return 3;
    } catch (const ArgumentError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const ncegeom::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
