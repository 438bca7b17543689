#include "ncegeom/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "ncegeom/error.hpp"
#include "ncegeom/format.hpp"
#include "ncegeom/nce_objective.hpp"

namespace ncegeom {

double tau(int k, int C) {
    if (k < 0) throw ArgumentError("tau needs k >= 0");
    if (C < 2) throw ArgumentError("tau needs C >= 2");
    return -std::expm1(k * std::log1p(-1.0 / C));
}

double alpha_saunshi(int k, int C) {
    if (k < 1) throw ArgumentError("alpha_saunshi needs k >= 1");
    if (C < 2) throw ArgumentError("alpha_saunshi needs C >= 2");
    const double eta = 1.0 + 1.0 / (C - 1.0);
    return 4.0 * std::log(static_cast<double>(C)) * (C - 1.0) * std::pow(eta, k) / k;
}

int min_negatives(const ClassDistribution& rho) {
    // Guard against 1/rho_max landing just above an integer through rounding.
    return static_cast<int>(std::ceil(1.0 / rho.rho_max() - 1e-9));
}

double beta_improved(int k, const ClassDistribution& rho) {
    const int threshold = min_negatives(rho);
    if (k < threshold)
        throw ArgumentError("beta_improved needs k >= 1/rho_max = " + std::to_string(threshold) +
                            " (got k=" + std::to_string(k) + ")");
    const double C = rho.classes();
    const double inner = 2.0 * (1.0 - rho.rho_min()) * std::log(C) /
                         (k * (1.0 - rho.rho_max()) * rho.rho_min());
    return 4.0 * std::max(1.0, inner);
}

BoundReport bound_factors(int k, const ClassDistribution& rho) {
    BoundReport r;
    r.C = rho.classes();
    r.k = k;
    r.rho_min = rho.rho_min();
    r.rho_max = rho.rho_max();
    r.beta_improved = beta_improved(k, rho);
    r.tau = tau(k, r.C);
    r.alpha_saunshi = alpha_saunshi(k, r.C);
    const double krm = k * r.rho_max;
    r.k_rho_max_integer = std::abs(krm - std::round(krm)) <= 1e-9;
    return r;
}

BoundReport validate_improved_bound(const CorrelationMatrix& Z, const ClassDistribution& rho,
                                    int k, const LossSpec& loss, const SupOptions& opts) {
    if (loss.kind != LossKind::logistic)
        throw ArgumentError("the improved bound is stated for the logistic loss only");
    BoundReport r = bound_factors(k, rho);
    const double nce = exact_nce_loss(Z, rho, k, loss);
    const double sup = sup_loss_of_Z(Z, rho, loss, opts);
    r.measured_nce = nce;
    r.measured_sup = sup;
    r.normalized_sup = sup / std::log(static_cast<double>(r.C));
    r.normalized_nce = nce / std::log1p(static_cast<double>(k));
    r.improved_bound_holds = sup <= r.beta_improved * nce + 1e-9;
    return r;
}

namespace {

template <class T>
nlohmann::json opt_json(const std::optional<T>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string opt_csv(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

}  // namespace

nlohmann::json BoundReport::to_json() const {
    nlohmann::json j;
    j["C"] = C;
    j["k"] = k;
    j["rho_min"] = rho_min;
    j["rho_max"] = rho_max;
    j["tau"] = tau;
    j["alpha_saunshi"] = alpha_saunshi;
    j["beta_improved"] = beta_improved;
    j["k_rho_max_integer"] = k_rho_max_integer;
    j["measured_nce"] = opt_json(measured_nce);
    j["measured_sup"] = opt_json(measured_sup);
    j["normalized_nce"] = opt_json(normalized_nce);
    j["normalized_sup"] = opt_json(normalized_sup);
    j["improved_bound_holds"] = opt_json(improved_bound_holds);
    return j;
}

std::string BoundReport::csv_header() {
    return "C,k,rho_min,rho_max,tau,alpha_saunshi,beta_improved,k_rho_max_integer,"
           "measured_nce,measured_sup,normalized_nce,normalized_sup,improved_bound_holds";
}

std::string BoundReport::csv_row() const {
    std::string holds = improved_bound_holds ? (*improved_bound_holds ? "true" : "false") : "";
    return std::to_string(C) + ',' + std::to_string(k) + ',' + format_double(rho_min) + ',' +
           format_double(rho_max) + ',' + format_double(tau) + ',' + format_double(alpha_saunshi) +
           ',' + format_double(beta_improved) + ',' + (k_rho_max_integer ? "true" : "false") + ',' +
           opt_csv(measured_nce) + ',' + opt_csv(measured_sup) + ',' + opt_csv(normalized_nce) +
           ',' + opt_csv(normalized_sup) + ',' + holds;
}

}  // namespace ncegeom
