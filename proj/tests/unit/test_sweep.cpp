#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "ncegeom/error.hpp"
#include "ncegeom/format.hpp"
#include "ncegeom/sweep.hpp"

using namespace ncegeom;
namespace fs = std::filesystem;

namespace {

SweepConfig tiny() {
    SweepConfig cfg;
    cfg.C_list = {3, 4};
    cfg.alpha_list = {1.0, 2.0};
    cfg.k_list = {1, 2, 4};
    cfg.optimizer.runs = 2;
    cfg.optimizer.steps = 40;
    cfg.optimizer.batch = 300;
    cfg.root_seed = 123;
    return cfg;
}

fs::path scratch(const std::string& name) {
    const char* base = std::getenv("NCEGEOM_TEST_TMP");
    fs::path dir = base ? fs::path(base) : fs::temp_directory_path() / "ncegeom_tests";
    dir /= name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
}

SweepRow row(int C, double alpha, int k, double sup) {
    SweepRow r;
    r.C = C;
    r.alpha = alpha;
    r.k = k;
    r.sup_loss = sup;
    return r;
}

}  // namespace

TEST_CASE("default config matches the documented grid") {
    const SweepConfig cfg;
    CHECK(cfg.C_list == std::vector<int>{3, 4, 5, 6, 7, 8, 9});
    CHECK(cfg.alpha_list == std::vector<double>{1, 2, 3, 4});
    CHECK(cfg.k_list == std::vector<int>{1, 2, 4, 8, 16, 32});
    CHECK(cfg.loss.kind == LossKind::logistic);
    CHECK(cfg.loss.beta == 1.0);
    CHECK(cfg.optimizer.steps == 1000);
    CHECK(cfg.optimizer.batch == 10000);
    CHECK(cfg.optimizer.eta0 == 50.0);
    CHECK(cfg.optimizer.runs == 400);
    CHECK(cfg.epsilon == 0.01);
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("config JSON") {
    SweepConfig cfg = tiny();
    cfg.loss = LossSpec::hinge(2.0);
    cfg.output_path = "out.csv";
    cfg.output_format = OutputFormat::json_lines;
    cfg.optimizer.mode = OptimizerMode::exact_gradient;
    const SweepConfig back = SweepConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
    CHECK(back.loss.kind == LossKind::hinge);
    CHECK(*back.output_path == "out.csv");

    const SweepConfig partial = SweepConfig::from_json(nlohmann::json::parse(R"({"k_list": [2, 8]})"));
    CHECK(partial.k_list == std::vector<int>{2, 8});
    CHECK(partial.C_list == SweepConfig{}.C_list);

    CHECK_THROWS_AS(SweepConfig::from_json(nlohmann::json::parse(R"({"klist": [1]})")), ArgumentError);
    CHECK_THROWS_AS(SweepConfig::from_json(nlohmann::json::parse(R"({"optimizer": {"step": 1}})")),
                    ArgumentError);
    CHECK_THROWS(SweepConfig::from_json(nlohmann::json::parse(R"({"k_list": "1,2"})")));
    CHECK_THROWS_AS(SweepConfig::from_json(nlohmann::json::parse(R"({"k_list": [4, 2]})")), ArgumentError);
    CHECK_THROWS_AS(SweepConfig::from_json(nlohmann::json::parse(R"({"C_list": []})")), ArgumentError);
    CHECK_THROWS_AS(SweepConfig::from_json(nlohmann::json::parse(R"({"loss": {"kind": "square_sum_test"}})")),
                    ArgumentError);
}

TEST_CASE("cell seeds") {
    CHECK(cell_seed(0, 3, 1.0) == cell_seed(0, 3, 1.0));
    CHECK(cell_seed(0, 3, 1.0) != cell_seed(1, 3, 1.0));
    CHECK(cell_seed(0, 3, 1.0) != cell_seed(0, 4, 1.0));
    CHECK(cell_seed(0, 3, 1.0) != cell_seed(0, 3, 2.0));
}

TEST_CASE("row serialization") {
    CHECK(SweepRow::csv_header() ==
          "C,alpha,distribution_seed,k,nce_loss_exact,sup_loss,offdiag_mean,offdiag_std,etf_gap,"
          "runs,steps,batch,wall_ms,error");
    SweepRow r = row(5, 2.5, 8, 0.731);
    r.distribution_seed = 18446744073709551615ULL;
    r.nce_loss_exact = 1.25;
    r.offdiag_mean = -0.24;
    r.offdiag_std = 0.01;
    r.etf_gap = 0.01;
    r.runs = 50;
    r.steps = 1000;
    r.batch = 10000;
    const std::string line = r.csv_row();
    const SweepRow back = SweepRow::from_csv_fields(split_csv_line(line), 2);
    CHECK(back.csv_row() == line);
    CHECK(SweepRow::from_json(r.to_json()).to_json() == r.to_json());

    SweepRow bad = row(9, 1.0, 32, std::nan(""));
    bad.error = "capacity, exceeded";
    const std::string bl = bad.csv_row();
    CHECK(bl.find(",,,,,") != std::string::npos);
    const SweepRow bb = SweepRow::from_csv_fields(split_csv_line(bl), 3);
    CHECK(bb.error == "capacity, exceeded");
    CHECK(std::isnan(bb.sup_loss));
    CHECK(bad.to_json()["sup_loss"].is_null());

    CHECK_THROWS_AS(SweepRow::from_csv_fields({"1", "2"}, 4), ParseError);
}

TEST_CASE("monotonicity classification") {
    const std::vector<SweepRow> rows{
        row(3, 1, 1, 0.5),  row(3, 1, 2, 0.4),  row(3, 1, 4, 0.3),     // strict
        row(3, 2, 4, 0.45), row(3, 2, 1, 0.5),  row(3, 2, 2, 0.505),   // non-strict, unsorted
        row(4, 1, 1, 0.5),  row(4, 1, 2, 0.52), row(4, 1, 4, 0.4),     // violating
        row(4, 2, 1, 0.5),  row(4, 2, 2, 0.5),  row(4, 2, 4, 0.5),     // flat
    };
    std::vector<SweepRow> with_error = rows;
    with_error.push_back(row(5, 1, 1, 0.5));
    with_error.push_back(row(5, 1, 2, std::nan("")));
    with_error.back().error = "failed";
    const MonotonicityReport rep = monotonicity_report(with_error, 0.01);
    CHECK(rep.total() == 5);
    CHECK(rep.strict == 1);
    CHECK(rep.non_strict == 2);
    CHECK(rep.violating == 1);
    CHECK(rep.incomplete == 1);
    CHECK(rep.non_increasing_fraction() == doctest::Approx(0.6));
    CHECK(rep.strict_fraction() == doctest::Approx(0.2));
    CHECK(rep.curves[1].k == std::vector<int>{1, 2, 4});
    CHECK(rep.curves[1].max_increase == doctest::Approx(0.005));
    CHECK(rep.curves[2].max_increase == doctest::Approx(0.02));
    CHECK(monotonicity_report(rows, 0.05).violating == 0);
}

TEST_CASE("sweeps are deterministic and independent of workers") {
    SweepConfig cfg = tiny();
    const SweepResult a = run_sweep(cfg);
    cfg.workers = 3;
    const SweepResult b = run_sweep(cfg);
    REQUIRE(a.rows.size() == 12);
    std::ostringstream sa, sb;
    write_sweep_rows(sa, a.rows, OutputFormat::csv);
    write_sweep_rows(sb, b.rows, OutputFormat::csv);
    CHECK(sa.str() == sb.str());
    CHECK(a.computed == 12);
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].ok());
        CHECK(a.rows[i].wall_ms == 0.0);
        CHECK(std::isfinite(a.rows[i].sup_loss));
    }
    CHECK(a.rows[0].C == 3);
    CHECK(a.rows[0].k == 1);
    CHECK(a.rows.back().C == 4);
    CHECK(a.rows.back().k == 4);
    CHECK(a.rows[0].distribution_seed == cell_seed(123, 3, 1.0));
}

TEST_CASE("uniform classes give k-independent supervised loss") {
    SweepConfig cfg;
    cfg.C_list = {3};
    cfg.alpha_list = {1.0};
    cfg.k_list = {1, 2, 4, 8};
    cfg.uniform = true;
    cfg.optimizer.runs = 4;
    cfg.optimizer.steps = 300;
    cfg.optimizer.batch = 2000;
    const SweepResult r = run_sweep(cfg);
    double lo = 1e9, hi = -1e9;
    for (const SweepRow& row : r.rows) {
        lo = std::min(lo, row.sup_loss);
        hi = std::max(hi, row.sup_loss);
        CHECK(std::abs(row.etf_gap) <= 0.05);
    }
    CHECK(hi - lo <= 0.02);
}

TEST_CASE("failed cells are recorded and the sweep continues") {
    SweepConfig cfg;
    cfg.C_list = {9};
    cfg.alpha_list = {1.0};
    cfg.k_list = {1, 32};
    cfg.optimizer.mode = OptimizerMode::exact_gradient;
    cfg.optimizer.runs = 1;
    cfg.optimizer.steps = 5;
    const SweepResult r = run_sweep(cfg);
    REQUIRE(r.rows.size() == 2);
    CHECK(r.rows[0].ok());
    CHECK_FALSE(r.rows[1].ok());
    CHECK(r.rows[1].error.find("cap") != std::string::npos);
    CHECK(r.report.incomplete == 1);
}

TEST_CASE("file sweeps resume and are byte-stable") {
    const fs::path dir = scratch("sweep_resume");
    SweepConfig cfg = tiny();
    cfg.output_path = (dir / "out.csv").string();
    const SweepResult first = run_sweep_to_file(cfg);
    CHECK(first.computed == 12);
    const std::string bytes = slurp(dir / "out.csv");
    CHECK(fs::exists(dir / "out.csv.meta.json"));
    CHECK_FALSE(fs::exists(dir / "out.csv.partial"));

    const SweepResult again = run_sweep_to_file(cfg);
    CHECK(again.computed == 0);
    CHECK(again.resumed == 12);
    CHECK(slurp(dir / "out.csv") == bytes);

    // Drop two rows; only those are recomputed and the file is restored.
    {
        std::istringstream in(bytes);
        std::ostringstream out;
        std::string line;
        int n = 0;
        while (std::getline(in, line)) {
            const int i = n++;
            if (i != 3 && i != 7) out << line << '\n';
        }
        std::ofstream(dir / "out.csv") << out.str();
    }
    const SweepResult patched = run_sweep_to_file(cfg);
    CHECK(patched.computed == 2);
    CHECK(slurp(dir / "out.csv") == bytes);

    // Changing the run count invalidates every row.
    SweepConfig more = cfg;
    more.optimizer.runs = 3;
    CHECK(run_sweep_to_file(more).computed == 12);

    // A fresh directory reproduces the same bytes.
    const fs::path dir2 = scratch("sweep_resume_fresh");
    cfg.output_path = (dir2 / "out.csv").string();
    run_sweep_to_file(cfg);
    CHECK(slurp(dir2 / "out.csv") == bytes);

    const auto meta = nlohmann::json::parse(slurp(dir2 / "out.csv.meta.json"));
    CHECK(meta["rows"] == 12);
    CHECK(meta["loss_beta"] == 1.0);
    CHECK(meta["workers"] == 1);
    CHECK(meta["config"] == cfg.to_json());
    CHECK(meta["monotonicity"]["curves"].size() == 4);
}

TEST_CASE("partial files from an interrupted sweep are reused") {
    const fs::path dir = scratch("sweep_partial");
    SweepConfig cfg = tiny();
    cfg.output_path = (dir / "out.csv").string();
    const SweepResult full = run_sweep(cfg);
    {
        std::ofstream p(dir / "out.csv.partial");
        p << SweepRow::csv_header() << '\n';
        for (int i = 0; i < 5; ++i) p << full.rows[static_cast<std::size_t>(i)].csv_row() << '\n';
        p << "3,1,123,trunc";  // torn final line
    }
    const SweepResult r = run_sweep_to_file(cfg);
    CHECK(r.resumed == 5);
    CHECK(r.computed == 7);
    std::ostringstream want;
    write_sweep_rows(want, full.rows, OutputFormat::csv);
    CHECK(slurp(dir / "out.csv") == want.str());
}

TEST_CASE("json lines output") {
    const fs::path dir = scratch("sweep_jsonl");
    SweepConfig cfg = tiny();
    cfg.C_list = {3};
    cfg.output_format = OutputFormat::json_lines;
    cfg.output_path = (dir / "out.jsonl").string();
    run_sweep_to_file(cfg);
    std::ifstream in(dir / "out.jsonl");
    const std::vector<SweepRow> rows = read_sweep_rows(in, OutputFormat::json_lines);
    CHECK(rows.size() == 6);
    std::ifstream again(dir / "out.jsonl");
    std::string first;
    std::getline(again, first);
    const auto j = nlohmann::json::parse(first);
    CHECK(j.contains("sup_loss"));
    CHECK(first.find("\"C\":3") != std::string::npos);
    CHECK(run_sweep_to_file(cfg).resumed == 6);
}
