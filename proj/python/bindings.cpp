#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "ncegeom/bounds.hpp"
#include "ncegeom/correlation_opt.hpp"
#include "ncegeom/downstream.hpp"
#include "ncegeom/error.hpp"
#include "ncegeom/latent_model.hpp"
#include "ncegeom/losses.hpp"
#include "ncegeom/metrics.hpp"
#include "ncegeom/nce_objective.hpp"
#include "ncegeom/verify.hpp"

namespace py = pybind11;
using namespace ncegeom;

namespace {

LossSpec spec(const std::string& kind, double beta) {
    LossSpec s{parse_loss_kind(kind), beta};
    s.validate();
    return s;
}

ClassDistribution dist(const std::vector<double>& rho) { return ClassDistribution(rho); }

LabeledEmbeddings read_embeddings(const std::string& path, bool normalize, bool strict_unit_norm) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open '" + path + "'");
    return load_embeddings(in, {normalize, strict_unit_norm});
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Latent-class model of contrastive learning with k negatives";

    const py::handle error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ArgumentError>(m, "ArgumentError", error);
    py::register_exception<CapacityError>(m, "CapacityError", error);
    py::register_exception<InvariantError>(m, "InvariantError", error);
    py::register_exception<NumericError>(m, "NumericError", error);
    py::register_exception<ParseError>(m, "ParseError", error);
    py::register_exception<ConvergenceError>(m, "ConvergenceError", error);

    m.def("loss_eval", [](const std::vector<double>& v, const std::string& kind, double beta) {
        return eval(spec(kind, beta), v);
    }, py::arg("v"), py::arg("loss") = "logistic", py::arg("beta") = 1.0);
    m.def("subadditivity_margin",
          [](const std::vector<double>& v, const std::vector<std::size_t>& S, const std::string& kind,
             double beta) { return subadditivity_margin(spec(kind, beta), v, S); },
          py::arg("v"), py::arg("S"), py::arg("loss") = "logistic", py::arg("beta") = 1.0);

    m.def("simplex_etf", [](int C) { return simplex_etf(C).matrix(); }, py::arg("C"),
          "Rows of the regular simplex on the unit sphere.");
    m.def("gram", [](const Eigen::MatrixXd& U) { return gram(Representation(U)).matrix(); }, py::arg("U"));
    m.def("factor", [](const Eigen::MatrixXd& Z) { return factor(CorrelationMatrix(Z)).matrix(); },
          py::arg("Z"));
    m.def("project_correlation",
          [](const Eigen::MatrixXd& A, double tol, int max_iter) {
              return project_correlation(A, tol, max_iter).matrix();
          },
          py::arg("A"), py::arg("tol") = 1e-8, py::arg("max_iter") = 200);
    m.def("min_eigenvalue", &min_eigenvalue, py::arg("A"));

    m.def("exact_nce_loss",
          [](const Eigen::MatrixXd& Z, const std::vector<double>& rho, int k, const std::string& kind,
             double beta) { return exact_nce_loss(CorrelationMatrix(Z), dist(rho), k, spec(kind, beta)); },
          py::arg("Z"), py::arg("rho"), py::arg("k"), py::arg("loss") = "logistic", py::arg("beta") = 1.0);
    m.def("mc_nce_loss",
          [](const Eigen::MatrixXd& Z, const std::vector<double>& rho, int k, const std::string& kind,
             double beta, std::int64_t samples, std::uint64_t seed) {
              const McEstimate e = mc_nce_loss(CorrelationMatrix(Z), dist(rho), k, spec(kind, beta),
                                               {k, NceMode::monte_carlo, samples, seed});
              return py::make_tuple(e.estimate, e.std_error);
          },
          py::arg("Z"), py::arg("rho"), py::arg("k"), py::arg("loss") = "logistic", py::arg("beta") = 1.0,
          py::arg("samples") = 1'000'000, py::arg("seed") = 0, "(estimate, standard error)");
    m.def("exact_nce_grad",
          [](const Eigen::MatrixXd& Z, const std::vector<double>& rho, int k, const std::string& kind,
             double beta) { return exact_nce_grad(CorrelationMatrix(Z), dist(rho), k, spec(kind, beta)); },
          py::arg("Z"), py::arg("rho"), py::arg("k"), py::arg("loss") = "logistic", py::arg("beta") = 1.0);

    m.def("solve_nce_optimal",
          [](const std::vector<double>& rho, int k, const std::string& kind, double beta, int steps,
             int batch, int runs, const std::string& mode, std::uint64_t seed, int workers) {
              OptimizerConfig cfg;
              cfg.steps = steps;
              cfg.batch = batch;
              cfg.runs = runs;
              cfg.mode = parse_optimizer_mode(mode);
              cfg.seed = seed;
              const NceOptimum opt = [&] {
                  py::gil_scoped_release release;
                  return solve_nce_optimal(dist(rho), k, spec(kind, beta), cfg, workers);
              }();
              py::dict out;
              out["Z"] = opt.Z.matrix();
              out["U"] = opt.U.matrix();
              out["nce_loss"] = opt.loss.value;
              out["nce_std_error"] = opt.loss.std_error;
              out["exact"] = opt.loss.exact;
              out["projection_failures"] = opt.projection_failures;
              return out;
          },
          py::arg("rho"), py::arg("k"), py::arg("loss") = "logistic", py::arg("beta") = 1.0,
          py::arg("steps") = 1000, py::arg("batch") = 10000, py::arg("runs") = 400,
          py::arg("mode") = "stochastic", py::arg("seed") = 0, py::arg("workers") = 1);

    m.def("sup_loss_of_Z",
          [](const Eigen::MatrixXd& Z, const std::vector<double>& rho, const std::string& kind, double beta) {
              return sup_loss_of_Z(CorrelationMatrix(Z), dist(rho), spec(kind, beta));
          },
          py::arg("Z"), py::arg("rho"), py::arg("loss") = "logistic", py::arg("beta") = 1.0);

    m.def("tau", &tau, py::arg("k"), py::arg("C"));
    m.def("alpha_saunshi", &alpha_saunshi, py::arg("k"), py::arg("C"));
    m.def("beta_improved", [](int k, const std::vector<double>& rho) { return beta_improved(k, dist(rho)); },
          py::arg("k"), py::arg("rho"));
    m.def("validate_improved_bound",
          [](const Eigen::MatrixXd& Z, const std::vector<double>& rho, int k, double beta) {
              return validate_improved_bound(CorrelationMatrix(Z), dist(rho), k, LossSpec::logistic(beta))
                  .to_json()
                  .dump();
          },
          py::arg("Z"), py::arg("rho"), py::arg("k"), py::arg("beta") = 1.0, "Report as a JSON string.");

    m.def("angle_proxy", &angle_proxy, py::arg("intra_var"));
    m.def("metrics_json",
          [](const std::string& path, bool normalize, bool strict_unit_norm) {
              return metrics_json(read_embeddings(path, normalize, strict_unit_norm)).dump();
          },
          py::arg("path"), py::arg("normalize") = false, py::arg("strict_unit_norm") = false,
          "Metrics of an embeddings CSV as a JSON string.");

    m.def("verify_quick", [](std::uint64_t seed) {
        VerifyOptions opts;
        opts.seed = seed;
        std::ostringstream out;
        const VerifyReport r = run_verify(opts);
        r.print(out);
        return py::make_tuple(r.all_passed(), out.str());
    }, py::arg("seed") = 0, "(all passed, report text)");
}
