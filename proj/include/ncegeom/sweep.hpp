#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ncegeom/correlation_opt.hpp"
#include "ncegeom/downstream.hpp"
#include "ncegeom/losses.hpp"

namespace ncegeom {

enum class OutputFormat { csv, json_lines };

std::string to_string(OutputFormat f);
OutputFormat parse_output_format(const std::string& name);

/// Grid of (C, alpha, k) cells. For every (C, alpha) a class distribution
/// is drawn once from Dirichlet(alpha) and every k in k_list is solved
/// against it.
struct SweepConfig {
    std::vector<int> C_list{3, 4, 5, 6, 7, 8, 9};
    std::vector<double> alpha_list{1.0, 2.0, 3.0, 4.0};
    std::vector<int> k_list{1, 2, 4, 8, 16, 32};
    LossSpec loss = LossSpec::logistic(1.0);
    OptimizerConfig optimizer;
    SupOptions sup;
    std::uint64_t root_seed = 0;
    std::optional<std::string> output_path;
    OutputFormat output_format = OutputFormat::csv;
    /// Use uniform class probabilities instead of Dirichlet draws.
    bool uniform = false;
    /// Tolerance of the monotonicity classification.
    double epsilon = 0.01;
    int workers = 1;
    /// Record wall-clock milliseconds per cell; off keeps files byte-stable.
    bool timing = false;

    void validate() const;
    nlohmann::json to_json() const;
    /// Missing keys keep their defaults; unknown keys are rejected.
    static SweepConfig from_json(const nlohmann::json& j);
};

/// Seed of the (C, alpha) cell group; also the Dirichlet draw seed.
std::uint64_t cell_seed(std::uint64_t root_seed, int C, double alpha);

struct SweepRow {
    int C = 0;
    double alpha = 0.0;
    std::uint64_t distribution_seed = 0;
    int k = 0;
    double nce_loss_exact = 0.0;
    double sup_loss = 0.0;
    double offdiag_mean = 0.0;
    double offdiag_std = 0.0;
    /// offdiag_mean + 1/(C - 1).
    double etf_gap = 0.0;
    int runs = 0;
    int steps = 0;
    int batch = 0;
    double wall_ms = 0.0;
    /// Empty on success; numeric results are NaN otherwise.
    std::string error;

    bool ok() const noexcept { return error.empty(); }
    static std::string csv_header();
    std::string csv_row() const;
    nlohmann::json to_json() const;
    static SweepRow from_csv_fields(const std::vector<std::string>& fields, std::size_t line);
    static SweepRow from_json(const nlohmann::json& j);
};

enum class CurveClass { strict, non_strict, violating, incomplete };
std::string to_string(CurveClass c);

/// sup_loss as a function of k for one (C, alpha).
struct CurveReport {
    int C = 0;
    double alpha = 0.0;
    std::vector<int> k;
    std::vector<double> sup_loss;
    /// Largest sup_loss[i + 1] - sup_loss[i]; negative when strictly decreasing.
    double max_increase = 0.0;
    CurveClass classification = CurveClass::incomplete;

    nlohmann::json to_json() const;
};

struct MonotonicityReport {
    double epsilon = 0.0;
    std::vector<CurveReport> curves;
    int strict = 0;
    int non_strict = 0;
    int violating = 0;
    int incomplete = 0;

    int total() const noexcept { return static_cast<int>(curves.size()); }
    /// Share of curves whose every consecutive increase is at most epsilon.
    double non_increasing_fraction() const noexcept;
    double strict_fraction() const noexcept;
    nlohmann::json to_json() const;
};

/// Classifies each (C, alpha) curve of `rows` (rows need not be sorted).
MonotonicityReport monotonicity_report(const std::vector<SweepRow>& rows, double epsilon);

struct SweepResult {
    std::vector<SweepRow> rows;  // sorted by (C, alpha, k)
    MonotonicityReport report;
    int computed = 0;
    int resumed = 0;
};

using RowCallback = std::function<void(const SweepRow&)>;

/// Solves every cell not already present in `existing`. An existing
/// error-free row is kept when its (C, alpha, k, distribution_seed) and its
/// runs, steps and batch match the cell. Output rows do not depend on the
/// worker count.
SweepResult run_sweep(const SweepConfig& cfg, const std::vector<SweepRow>& existing = {},
                      const RowCallback& on_row = {});

/// Computes one cell.
SweepRow run_cell(const SweepConfig& cfg, int C, double alpha, int k);

void write_sweep_rows(std::ostream& out, const std::vector<SweepRow>& rows, OutputFormat format);
std::vector<SweepRow> read_sweep_rows(std::istream& in, OutputFormat format);

/// Sidecar document: the config verbatim, run settings and the report.
nlohmann::json sweep_metadata(const SweepConfig& cfg, const SweepResult& result);

/// Runs the sweep against cfg.output_path. Finished rows are appended to
/// `<output_path>.partial` as they complete; rows found in the output file
/// or the partial file are resumed. At the end the output is rewritten
/// sorted, the partial file removed and `<output_path>.meta.json` written.
SweepResult run_sweep_to_file(const SweepConfig& cfg, const RowCallback& on_row = {});

}  // namespace ncegeom
