#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ncegeom/losses.hpp"

namespace ncegeom {

enum class VerifyLevel { quick, full };

VerifyLevel parse_verify_level(const std::string& name);

/// Signature of the raw exact NCE gradient (detail::exact_nce_grad).
using NceGradFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&, const std::vector<double>&,
                                                int, const LossSpec&)>;

struct VerifyOptions {
    VerifyLevel level = VerifyLevel::quick;
    std::uint64_t seed = 0;
    /// Gradient under test in the finite-difference check; empty means the
    /// library implementation.
    NceGradFn nce_grad;
};

struct CheckResult {
    std::string name;
    bool passed = false;
    /// Summary on success; the violated invariant and a counterexample on failure.
    std::string detail;
};

struct VerifyReport {
    std::vector<CheckResult> checks;

    bool all_passed() const noexcept;
    const CheckResult* find(const std::string& name) const noexcept;
    /// One `PASS|FAIL  name  detail` line per check.
    void print(std::ostream& out) const;
};

/// Cross-module oracle and property suite. `full` runs larger samples and
/// the 400-run pipeline at C = 3.
VerifyReport run_verify(const VerifyOptions& opts = {});

}  // namespace ncegeom
