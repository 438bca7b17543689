#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "ncegeom/downstream.hpp"
#include "ncegeom/latent_model.hpp"
#include "ncegeom/losses.hpp"

namespace ncegeom {

// Factors relating the supervised loss to the NCE loss. Logs are natural.

/// 1 - (1 - 1/C)^k: probability that at least one of k uniform negatives
/// collides with the anchor class.
double tau(int k, int C);

/// 4 ln C (C - 1) eta^k / k with eta = 1 + 1/(C - 1). Reference curve for
/// the exponentially growing factor under uniform classes; never used as a
/// certified bound.
double alpha_saunshi(int k, int C);

/// Smallest k accepted by beta_improved: ceil(1 / rho_max).
int min_negatives(const ClassDistribution& rho);

/// 4 max(1, 2 (1 - rho_min) ln C / (k (1 - rho_max) rho_min)), valid for
/// the logistic loss when k >= 1 / rho_max.
double beta_improved(int k, const ClassDistribution& rho);

struct BoundReport {
    int C = 0;
    int k = 0;
    double rho_min = 0.0;
    double rho_max = 0.0;
    double tau = 0.0;
    double alpha_saunshi = 0.0;
    double beta_improved = 0.0;
    /// False when k * rho_max is not an integer (the bound is still reported).
    bool k_rho_max_integer = false;
    std::optional<double> measured_nce;
    std::optional<double> measured_sup;
    /// measured_sup / ln C and measured_nce / ln(1 + k).
    std::optional<double> normalized_sup;
    std::optional<double> normalized_nce;
    std::optional<bool> improved_bound_holds;

    nlohmann::json to_json() const;
    static std::string csv_header();
    std::string csv_row() const;
};

/// Factor-only report (no measured representation).
BoundReport bound_factors(int k, const ClassDistribution& rho);

/// Measures L_NCE (exact) and L_sup of Z and checks
/// L_sup <= beta_improved * L_NCE + 1e-9. Logistic loss only.
BoundReport validate_improved_bound(const CorrelationMatrix& Z, const ClassDistribution& rho,
                                    int k, const LossSpec& loss, const SupOptions& opts = {});

}  // namespace ncegeom
