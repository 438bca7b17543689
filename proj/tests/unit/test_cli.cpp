#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ncegeom/format.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Outcome {
    int status = -1;
    std::string out;
    std::string err;
};

const fs::path& tmp_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::path(NCEGEOM_TEST_TMP) / "cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
}

fs::path write_file(const std::string& name, const std::string& text) {
    const fs::path p = tmp_dir() / name;
    std::ofstream(p) << text;
    return p;
}

Outcome run(const std::string& args) {
    const fs::path err = tmp_dir() / "stderr.txt";
    const std::string cmd = std::string("'") + NCEGEOM_CLI_PATH + "' " + args + " 2>'" + err.string() + "'";
    Outcome o;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe);
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) o.out.append(buf, n);
    const int raw = pclose(pipe);
    o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    o.err = slurp(err);
    return o;
}

Eigen::MatrixXd parse_matrix(const std::string& text) {
    std::istringstream in(text);
    return ncegeom::read_csv_matrix(in);
}

}  // namespace

TEST_CASE("etf") {
    const Outcome five = run("etf 5");
    REQUIRE(five.status == 0);
    const Eigen::MatrixXd Z = parse_matrix(five.out);
    REQUIRE(Z.rows() == 5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) CHECK(std::abs(Z(i, j) - (i == j ? 1.0 : -0.25)) <= 1e-12);

    const Outcome two = run("etf 2");
    CHECK(parse_matrix(two.out)(0, 1) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(run("etf 1").status == 2);
    CHECK(run("etf").status == 2);

    const fs::path emb = tmp_dir() / "etf3_rows.csv";
    const Outcome j = run("--format json_lines etf 3 --embeddings '" + emb.string() + "'");
    REQUIRE(j.status == 0);
    const json doc = json::parse(j.out);
    CHECK(doc["gram"][0][1].get<double>() == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(parse_matrix(slurp(emb)).rows() == 3);
}

TEST_CASE("eval") {
    const fs::path etf2 = tmp_dir() / "etf2.csv";
    REQUIRE(run("etf 2 --out '" + etf2.string() + "'").status == 0);
    const Outcome a = run("eval --z '" + etf2.string() + "' --rho uniform:2 --k 1");
    REQUIRE(a.status == 0);
    const json ja = json::parse(a.out);
    CHECK(ja["nce_loss"].get<double>() == doctest::Approx(0.410038).epsilon(1e-6));
    CHECK(ja["mode"] == "exact");
    CHECK(ja["sup_loss"].get<double>() == doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-6));

    const fs::path ones = write_file("ones.csv", "1,1,1\n1,1,1\n1,1,1\n");
    const json jb = json::parse(run("eval --z '" + ones.string() + "' --rho 0.2,0.3,0.5 --k 7").out);
    CHECK(jb["nce_loss"].get<double>() == doctest::Approx(std::log(8.0)).epsilon(1e-12));

    const fs::path etf9 = tmp_dir() / "etf9.csv";
    run("etf 9 --out '" + etf9.string() + "'");
    const json jc = json::parse(
        run("--seed 4 --format json_lines eval --z '" + etf9.string() + "' --rho uniform:9 --k 32 --mc-samples 20000").out);
    CHECK(jc["mode"] == "monte_carlo");
    CHECK(jc["mc_samples"] == 20000);
    CHECK(jc["seed"] == 4);
    CHECK(jc["nce_std_error"].get<double>() > 0.0);

    const fs::path ragged = write_file("ragged.csv", "1,0\n0\n");
    const Outcome r = run("eval --z '" + ragged.string() + "' --rho uniform:2 --k 1");
    CHECK(r.status == 3);
    CHECK(r.err.find("row 2") != std::string::npos);

    const fs::path bad = write_file("indef.csv", "1,0.9,-0.9\n0.9,1,0.9\n-0.9,0.9,1\n");
    const Outcome i = run("eval --z '" + bad.string() + "' --rho uniform:3 --k 1");
    CHECK(i.status == 4);
    CHECK(i.err.find("eigenvalue") != std::string::npos);

    CHECK(run("eval --z '" + etf2.string() + "' --rho uniform:3 --k 1").status == 2);
    CHECK(run("eval --z '" + etf2.string() + "' --rho uniform:2 --k 1 --loss square").status == 2);
}

TEST_CASE("bounds") {
    const Outcome a = run("--format json_lines bounds --rho uniform:10 --k 100");
    REQUIRE(a.status == 0);
    CHECK(json::parse(a.out)["beta_improved"] == 4.0);

    const Outcome csv = run("bounds --rho uniform:10 --k 10:200");
    REQUIRE(csv.status == 0);
    std::istringstream lines(csv.out);
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) ++n;
    CHECK(n == 192);

    CHECK(run("bounds --rho uniform:10 --k 5").status == 2);

    const fs::path etf5 = tmp_dir() / "etf5.csv";
    run("etf 5 --out '" + etf5.string() + "'");
    const Outcome v = run("--format json_lines bounds --rho uniform:5 --k 5 --z '" + etf5.string() + "'");
    REQUIRE(v.status == 0);
    CHECK(json::parse(v.out)["improved_bound_holds"] == true);
    CHECK(run("bounds --rho uniform:5 --k 5 --loss hinge --z '" + etf5.string() + "'").status == 2);
}

TEST_CASE("metrics") {
    const fs::path f = write_file("emb.csv", "label,x0,x1\na,1,0\na,0,1\nb,-3,-4\n");
    const Outcome j = run("--format json_lines metrics '" + f.string() + "' --normalize");
    REQUIRE(j.status == 0);
    const json doc = json::parse(j.out);
    CHECK(doc["classes"]["a"]["intra_var"] == 0.5);
    const Outcome c = run("metrics '" + f.string() + "'");
    CHECK(c.out.rfind("metric,class_a,class_b,value\n", 0) == 0);
    CHECK(run("metrics '" + f.string() + "' --strict-unit-norm").status == 3);
    const fs::path h = write_file("bad_header.csv", "lbl,x0\na,1\n");
    CHECK(run("metrics '" + h.string() + "'").status == 3);
    CHECK(run("metrics '" + (tmp_dir() / "missing.csv").string() + "'").status == 2);
}

TEST_CASE("verify") {
    const Outcome v = run("verify --level quick");
    CHECK(v.status == 0);
    CHECK(v.out.find("PASS  nce.grad_fd") != std::string::npos);
    CHECK(v.out.find("FAIL") == std::string::npos);
}

TEST_CASE("sweep") {
    const std::string grid = "sweep --C-list 3 --alpha-list 1,2 --k-list 1,2 --runs 2 --steps 20 --batch 200 --quiet";
    const Outcome s = run("--seed 9 " + grid);
    REQUIRE(s.status == 0);
    CHECK(s.out.rfind("C,alpha,distribution_seed,k,nce_loss_exact,sup_loss,", 0) == 0);
    CHECK(s.err.find("non-increasing fraction") != std::string::npos);

    const fs::path out = tmp_dir() / "sweep" / "rows.csv";
    REQUIRE(run("--seed 9 --out '" + out.string() + "' " + grid).status == 0);
    CHECK(slurp(out) == s.out);
    CHECK(fs::exists(out.string() + ".meta.json"));
    REQUIRE(run("--seed 9 --workers 2 --out '" + out.string() + "' " + grid).status == 0);
    CHECK(slurp(out) == s.out);

    const fs::path cfg = write_file("sweep.json", R"({"C_list": [3], "alpha_list": [1, 2], "k_list": [1, 2],
        "root_seed": 9, "optimizer": {"runs": 2, "steps": 20, "batch": 200}})");
    const Outcome c = run("--config '" + cfg.string() + "' sweep --quiet");
    REQUIRE(c.status == 0);
    CHECK(c.out == s.out);
    const Outcome o = run("--config '" + cfg.string() + "' --seed 10 sweep --quiet");
    CHECK(o.out != s.out);

    const fs::path bad = write_file("bad.json", R"({"C_list": [3], "bogus": 1})");
    CHECK(run("--config '" + bad.string() + "' sweep").status == 2);
    const fs::path broken = write_file("broken.json", "{");
    CHECK(run("--config '" + broken.string() + "' sweep").status == 3);
}

TEST_CASE("usage") {
    CHECK(run("--help").status == 0);
    CHECK(run("").status == 2);
    CHECK(run("frobnicate").status == 2);
    CHECK(run("--format xml etf 3").status == 2);
}
