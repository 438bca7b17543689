#include "cli_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "ncegeom/error.hpp"
#include "ncegeom/format.hpp"

namespace ncegeom::cli {

namespace {

int parse_int(const std::string& text, const std::string& what) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw ArgumentError("bad " + what + " '" + text + "'");
    return v;
}

std::vector<double> parse_inline(const std::string& spec, bool& ok) {
    std::vector<double> out;
    ok = true;
    for (const std::string& cell : split_csv_line(spec)) {
        double x = 0.0;
        if (!parse_double(cell, x)) {
            ok = false;
            return {};
        }
        out.push_back(x);
    }
    return out;
}

}  // namespace

ClassDistribution parse_rho_spec(const std::string& spec) {
    if (spec.rfind("uniform:", 0) == 0) return uniform_distribution(parse_int(spec.substr(8), "class count"));
    bool inline_ok = false;
    std::vector<double> probs = parse_inline(spec, inline_ok);
    if (!inline_ok) {
        const Eigen::MatrixXd M = read_matrix_file(spec);
        if (M.rows() != 1 && M.cols() != 1)
            throw ParseError("class distribution file must hold one row or one column", 1);
        probs.assign(M.data(), M.data() + M.size());
    }
    return ClassDistribution(probs);
}

std::vector<int> parse_k_spec(const std::string& spec) {
    std::vector<int> ks;
    if (const auto colon = spec.find(':'); colon != std::string::npos) {
        const int lo = parse_int(spec.substr(0, colon), "k");
        const int hi = parse_int(spec.substr(colon + 1), "k");
        if (hi < lo) throw ArgumentError("empty k range '" + spec + "'");
        for (int k = lo; k <= hi; ++k) ks.push_back(k);
    } else {
        for (const std::string& cell : split_csv_line(spec)) ks.push_back(parse_int(cell, "k"));
    }
    if (ks.empty()) throw ArgumentError("no k values in '" + spec + "'");
    return ks;
}

Eigen::MatrixXd read_matrix_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open '" + path + "'");
    return read_csv_matrix(in);
}

LossSpec make_loss(const std::string& kind, double beta) {
    LossSpec spec{parse_loss_kind(kind), beta};
    spec.validate_objective();
    return spec;
}

}  // namespace ncegeom::cli
