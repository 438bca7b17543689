#include "ncegeom/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "ncegeom/error.hpp"
#include "ncegeom/format.hpp"
#include "ncegeom/latent_model.hpp"
#include "ncegeom/rng.hpp"

namespace ncegeom {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using json = nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ArgumentError(where + " must be a JSON object");
    for (const auto& item : j.items())
        if (!allowed.contains(item.key()))
            throw ArgumentError("unknown key '" + item.key() + "' in " + where);
}

template <class T>
void read_key(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ArgumentError("config key '" + std::string(key) + "' in " + where + " has the wrong type");
    }
}

template <class Int>
Int parse_int(const std::string& text, const char* what, std::size_t line) {
    Int v{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw ParseError(std::string("bad ") + what + " '" + text + "'", line);
    return v;
}

double parse_num(const std::string& text, const char* what, std::size_t line) {
    if (text.empty()) return kNaN;
    double v = 0.0;
    if (!parse_double(text, v)) throw ParseError(std::string("bad ") + what + " '" + text + "'", line);
    return v;
}

std::string num_field(double x, bool ok) { return ok ? format_double(x) : ""; }

json num_json(double x, bool ok) { return ok ? json(x) : json(nullptr); }

double json_num(const json& j, const char* key) {
    const json& v = j.at(key);
    return v.is_null() ? kNaN : v.get<double>();
}

using CellKey = std::tuple<int, double, int>;

bool same_cell(const SweepRow& a, const SweepRow& b) {
    return a.C == b.C && a.alpha == b.alpha && a.k == b.k &&
           a.distribution_seed == b.distribution_seed && a.runs == b.runs && a.steps == b.steps &&
           a.batch == b.batch;
}

std::vector<SweepRow> read_rows_impl(std::istream& in, OutputFormat format, bool lenient) {
    std::vector<SweepRow> rows;
    std::string line;
    std::size_t lineno = 0;
    if (format == OutputFormat::csv) {
        if (!std::getline(in, line)) return rows;
        ++lineno;
        if (line != SweepRow::csv_header()) {
            if (lenient) return rows;
            throw ParseError("sweep file header does not match the expected columns", 1);
        }
    }
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            if (format == OutputFormat::csv) {
                rows.push_back(SweepRow::from_csv_fields(split_csv_line(line), lineno));
            } else {
                json j;
                try {
                    j = json::parse(line);
                } catch (const json::exception&) {
                    throw ParseError("invalid JSON line", lineno);
                }
                rows.push_back(SweepRow::from_json(j));
            }
        } catch (const Error&) {
            // A crash can leave a truncated last line in the partial file.
            if (!lenient) throw;
        }
    }
    return rows;
}

}  // namespace

std::string to_string(OutputFormat f) { return f == OutputFormat::csv ? "csv" : "json_lines"; }

OutputFormat parse_output_format(const std::string& name) {
    if (name == "csv") return OutputFormat::csv;
    if (name == "json_lines") return OutputFormat::json_lines;
    throw ArgumentError("unknown output format '" + name + "' (expected csv or json_lines)");
}

void SweepConfig::validate() const {
    if (C_list.empty() || alpha_list.empty() || k_list.empty())
        throw ArgumentError("C_list, alpha_list and k_list must be nonempty");
    for (int C : C_list)
        if (C < 2) throw ArgumentError("every C must be >= 2");
    for (double a : alpha_list)
        if (!(a > 0.0) || !std::isfinite(a)) throw ArgumentError("every alpha must be positive");
    if (std::set<int>(C_list.begin(), C_list.end()).size() != C_list.size())
        throw ArgumentError("C_list has duplicates");
    if (std::set<double>(alpha_list.begin(), alpha_list.end()).size() != alpha_list.size())
        throw ArgumentError("alpha_list has duplicates");
    if (k_list.front() < 1) throw ArgumentError("every k must be >= 1");
    for (std::size_t i = 1; i < k_list.size(); ++i)
        if (k_list[i] <= k_list[i - 1]) throw ArgumentError("k_list must be strictly increasing");
    if (!(epsilon >= 0.0)) throw ArgumentError("epsilon must be >= 0");
    if (workers < 1) throw ArgumentError("workers must be >= 1");
    loss.validate_objective();
    optimizer.validate();
    if (sup.iters < 1 || !(sup.eta > 0.0) || !(sup.tol >= 0.0))
        throw ArgumentError("sup options need iters >= 1, eta > 0 and tol >= 0");
}

json SweepConfig::to_json() const {
    json j;
    j["C_list"] = C_list;
    j["alpha_list"] = alpha_list;
    j["k_list"] = k_list;
    j["loss"] = {{"kind", to_string(loss.kind)}, {"beta", loss.beta}};
    j["optimizer"] = {{"steps", optimizer.steps},
                      {"batch", optimizer.batch},
                      {"eta0", optimizer.eta0},
                      {"runs", optimizer.runs},
                      {"mode", to_string(optimizer.mode)},
                      {"init", to_string(optimizer.init)},
                      {"projection_tol", optimizer.projection_tol},
                      {"projection_max_iter", optimizer.projection_max_iter},
                      {"trace_every", optimizer.trace_every}};
    j["sup"] = {{"iters", sup.iters}, {"eta", sup.eta}, {"tol", sup.tol}};
    j["root_seed"] = root_seed;
    j["output_path"] = output_path ? json(*output_path) : json(nullptr);
    j["output_format"] = to_string(output_format);
    j["uniform"] = uniform;
    j["epsilon"] = epsilon;
    j["workers"] = workers;
    j["timing"] = timing;
    return j;
}

SweepConfig SweepConfig::from_json(const json& j) {
    const std::string top = "sweep config";
    check_keys(j, {"C_list", "alpha_list", "k_list", "loss", "optimizer", "sup", "root_seed",
                   "output_path", "output_format", "uniform", "epsilon", "workers", "timing"},
               top);
    SweepConfig cfg;
    read_key(j, "C_list", cfg.C_list, top);
    read_key(j, "alpha_list", cfg.alpha_list, top);
    read_key(j, "k_list", cfg.k_list, top);
    read_key(j, "root_seed", cfg.root_seed, top);
    read_key(j, "uniform", cfg.uniform, top);
    read_key(j, "epsilon", cfg.epsilon, top);
    read_key(j, "workers", cfg.workers, top);
    read_key(j, "timing", cfg.timing, top);
    if (j.contains("output_path") && !j.at("output_path").is_null()) {
        std::string path;
        read_key(j, "output_path", path, top);
        cfg.output_path = path;
    }
    if (j.contains("output_format")) {
        std::string f;
        read_key(j, "output_format", f, top);
        cfg.output_format = parse_output_format(f);
    }
    if (j.contains("loss")) {
        const json& l = j.at("loss");
        check_keys(l, {"kind", "beta"}, "loss");
        std::string kind = to_string(cfg.loss.kind);
        read_key(l, "kind", kind, "loss");
        cfg.loss.kind = parse_loss_kind(kind);
        read_key(l, "beta", cfg.loss.beta, "loss");
    }
    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        const std::string where = "optimizer";
        check_keys(o, {"steps", "batch", "eta0", "runs", "mode", "init", "projection_tol",
                       "projection_max_iter", "trace_every"},
                   where);
        read_key(o, "steps", cfg.optimizer.steps, where);
        read_key(o, "batch", cfg.optimizer.batch, where);
        read_key(o, "eta0", cfg.optimizer.eta0, where);
        read_key(o, "runs", cfg.optimizer.runs, where);
        read_key(o, "projection_tol", cfg.optimizer.projection_tol, where);
        read_key(o, "projection_max_iter", cfg.optimizer.projection_max_iter, where);
        read_key(o, "trace_every", cfg.optimizer.trace_every, where);
        if (o.contains("mode")) {
            std::string m;
            read_key(o, "mode", m, where);
            cfg.optimizer.mode = parse_optimizer_mode(m);
        }
        if (o.contains("init")) {
            std::string m;
            read_key(o, "init", m, where);
            cfg.optimizer.init = parse_init_mode(m);
        }
    }
    if (j.contains("sup")) {
        const json& s = j.at("sup");
        check_keys(s, {"iters", "eta", "tol"}, "sup");
        read_key(s, "iters", cfg.sup.iters, "sup");
        read_key(s, "eta", cfg.sup.eta, "sup");
        read_key(s, "tol", cfg.sup.tol, "sup");
    }
    cfg.validate();
    return cfg;
}

std::uint64_t cell_seed(std::uint64_t root_seed, int C, double alpha) {
    return derive_seed(root_seed, {static_cast<std::uint64_t>(C), seed_bits(alpha)});
}

std::string SweepRow::csv_header() {
    return "C,alpha,distribution_seed,k,nce_loss_exact,sup_loss,offdiag_mean,offdiag_std,etf_gap,"
           "runs,steps,batch,wall_ms,error";
}

std::string SweepRow::csv_row() const {
    const bool good = ok();
    std::ostringstream out;
    out << C << ',' << format_double(alpha) << ',' << distribution_seed << ',' << k << ','
        << num_field(nce_loss_exact, good) << ',' << num_field(sup_loss, good) << ','
        << num_field(offdiag_mean, good) << ',' << num_field(offdiag_std, good) << ','
        << num_field(etf_gap, good) << ',' << runs << ',' << steps << ',' << batch << ','
        << format_double(wall_ms) << ',' << csv_escape(error);
    return out.str();
}

json SweepRow::to_json() const {
    const bool good = ok();
    json j;
    j["C"] = C;
    j["alpha"] = alpha;
    j["distribution_seed"] = distribution_seed;
    j["k"] = k;
    j["nce_loss_exact"] = num_json(nce_loss_exact, good);
    j["sup_loss"] = num_json(sup_loss, good);
    j["offdiag_mean"] = num_json(offdiag_mean, good);
    j["offdiag_std"] = num_json(offdiag_std, good);
    j["etf_gap"] = num_json(etf_gap, good);
    j["runs"] = runs;
    j["steps"] = steps;
    j["batch"] = batch;
    j["wall_ms"] = wall_ms;
    j["error"] = error;
    return j;
}

SweepRow SweepRow::from_csv_fields(const std::vector<std::string>& f, std::size_t line) {
    if (f.size() != 14)
        throw ParseError("expected 14 sweep columns, got " + std::to_string(f.size()), line);
    SweepRow r;
    r.C = parse_int<int>(f[0], "C", line);
    r.alpha = parse_num(f[1], "alpha", line);
    r.distribution_seed = parse_int<std::uint64_t>(f[2], "distribution_seed", line);
    r.k = parse_int<int>(f[3], "k", line);
    r.nce_loss_exact = parse_num(f[4], "nce_loss_exact", line);
    r.sup_loss = parse_num(f[5], "sup_loss", line);
    r.offdiag_mean = parse_num(f[6], "offdiag_mean", line);
    r.offdiag_std = parse_num(f[7], "offdiag_std", line);
    r.etf_gap = parse_num(f[8], "etf_gap", line);
    r.runs = parse_int<int>(f[9], "runs", line);
    r.steps = parse_int<int>(f[10], "steps", line);
    r.batch = parse_int<int>(f[11], "batch", line);
    r.wall_ms = parse_num(f[12], "wall_ms", line);
    r.error = f[13];
    if (r.ok() && !(std::isfinite(r.nce_loss_exact) && std::isfinite(r.sup_loss) &&
                    std::isfinite(r.offdiag_mean) && std::isfinite(r.offdiag_std)))
        throw ParseError("row without error has missing numeric fields", line);
    return r;
}

SweepRow SweepRow::from_json(const json& j) {
    try {
        SweepRow r;
        r.C = j.at("C").get<int>();
        r.alpha = j.at("alpha").get<double>();
        r.distribution_seed = j.at("distribution_seed").get<std::uint64_t>();
        r.k = j.at("k").get<int>();
        r.nce_loss_exact = json_num(j, "nce_loss_exact");
        r.sup_loss = json_num(j, "sup_loss");
        r.offdiag_mean = json_num(j, "offdiag_mean");
        r.offdiag_std = json_num(j, "offdiag_std");
        r.etf_gap = json_num(j, "etf_gap");
        r.runs = j.at("runs").get<int>();
        r.steps = j.at("steps").get<int>();
        r.batch = j.at("batch").get<int>();
        r.wall_ms = j.at("wall_ms").get<double>();
        r.error = j.at("error").get<std::string>();
        return r;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed sweep row: ") + e.what(), 0);
    }
}

std::string to_string(CurveClass c) {
    switch (c) {
        case CurveClass::strict: return "strict";
        case CurveClass::non_strict: return "non_strict";
        case CurveClass::violating: return "violating";
        case CurveClass::incomplete: return "incomplete";
    }
    return "incomplete";
}

json CurveReport::to_json() const {
    json j;
    j["C"] = C;
    j["alpha"] = alpha;
    j["k"] = k;
    j["sup_loss"] = sup_loss;
    j["max_increase"] = classification == CurveClass::incomplete ? json(nullptr) : json(max_increase);
    j["classification"] = to_string(classification);
    return j;
}

double MonotonicityReport::non_increasing_fraction() const noexcept {
    return curves.empty() ? 0.0 : static_cast<double>(strict + non_strict) / total();
}

double MonotonicityReport::strict_fraction() const noexcept {
    return curves.empty() ? 0.0 : static_cast<double>(strict) / total();
}

json MonotonicityReport::to_json() const {
    json j;
    j["epsilon"] = epsilon;
    j["curves"] = json::array();
    for (const CurveReport& c : curves) j["curves"].push_back(c.to_json());
    j["total"] = total();
    j["strict"] = strict;
    j["non_strict"] = non_strict;
    j["violating"] = violating;
    j["incomplete"] = incomplete;
    j["strict_fraction"] = strict_fraction();
    j["non_increasing_fraction"] = non_increasing_fraction();
    return j;
}

MonotonicityReport monotonicity_report(const std::vector<SweepRow>& rows, double epsilon) {
    std::map<std::pair<int, double>, std::vector<const SweepRow*>> groups;
    for (const SweepRow& r : rows) groups[{r.C, r.alpha}].push_back(&r);
    MonotonicityReport rep;
    rep.epsilon = epsilon;
    for (auto& [key, members] : groups) {
        std::sort(members.begin(), members.end(),
                  [](const SweepRow* a, const SweepRow* b) { return a->k < b->k; });
        CurveReport curve;
        curve.C = key.first;
        curve.alpha = key.second;
        bool complete = true;
        for (const SweepRow* r : members) {
            curve.k.push_back(r->k);
            curve.sup_loss.push_back(r->sup_loss);
            complete = complete && r->ok();
        }
        if (!complete) {
            curve.classification = CurveClass::incomplete;
            ++rep.incomplete;
        } else {
            double max_inc = -std::numeric_limits<double>::infinity();
            bool strict = true;
            for (std::size_t i = 1; i < curve.sup_loss.size(); ++i) {
                const double d = curve.sup_loss[i] - curve.sup_loss[i - 1];
                max_inc = std::max(max_inc, d);
                strict = strict && d < 0.0;
            }
            if (curve.sup_loss.size() < 2) max_inc = 0.0;
            curve.max_increase = max_inc;
            if (strict && curve.sup_loss.size() >= 2) {
                curve.classification = CurveClass::strict;
                ++rep.strict;
            } else if (max_inc <= epsilon) {
                curve.classification = CurveClass::non_strict;
                ++rep.non_strict;
            } else {
                curve.classification = CurveClass::violating;
                ++rep.violating;
            }
        }
        rep.curves.push_back(std::move(curve));
    }
    return rep;
}

SweepRow run_cell(const SweepConfig& cfg, int C, double alpha, int k) {
    SweepRow row;
    row.C = C;
    row.alpha = alpha;
    row.k = k;
    row.distribution_seed = cell_seed(cfg.root_seed, C, alpha);
    row.runs = cfg.optimizer.runs;
    row.steps = cfg.optimizer.steps;
    row.batch = cfg.optimizer.batch;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const ClassDistribution rho =
            cfg.uniform ? uniform_distribution(C) : dirichlet_sample(C, alpha, row.distribution_seed);
        OptimizerConfig oc = cfg.optimizer;
        oc.seed = derive_seed(row.distribution_seed, {static_cast<std::uint64_t>(k)});
        oc.trace_dir.reset();
        const NceOptimum opt = solve_nce_optimal(rho, k, cfg.loss, oc, 1);
        row.nce_loss_exact = opt.loss.value;
        row.sup_loss = optimize_sup(opt.U, rho, cfg.loss, cfg.sup).value;
        const OffDiagonalStats stats = off_diagonal_stats(opt.Z.matrix());
        row.offdiag_mean = stats.mean;
        row.offdiag_std = stats.std;
        row.etf_gap = stats.mean + 1.0 / (C - 1.0);
    } catch (const std::exception& e) {
        row.error = e.what();
        if (row.error.empty()) row.error = "unknown failure";
        row.nce_loss_exact = row.sup_loss = row.offdiag_mean = row.offdiag_std = row.etf_gap = kNaN;
    }
    if (cfg.timing)
        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

SweepResult run_sweep(const SweepConfig& cfg, const std::vector<SweepRow>& existing,
                      const RowCallback& on_row) {
    cfg.validate();
    std::vector<int> Cs = cfg.C_list;
    std::vector<double> alphas = cfg.alpha_list;
    std::sort(Cs.begin(), Cs.end());
    std::sort(alphas.begin(), alphas.end());

    SweepResult result;
    std::vector<SweepRow> rows;
    std::vector<std::size_t> pending;
    for (int C : Cs)
        for (double alpha : alphas)
            for (int k : cfg.k_list) {
                SweepRow probe;
                probe.C = C;
                probe.alpha = alpha;
                probe.k = k;
                probe.distribution_seed = cell_seed(cfg.root_seed, C, alpha);
                probe.runs = cfg.optimizer.runs;
                probe.steps = cfg.optimizer.steps;
                probe.batch = cfg.optimizer.batch;
                const auto hit = std::find_if(existing.begin(), existing.end(), [&](const SweepRow& r) {
                    return r.ok() && same_cell(r, probe);
                });
                if (hit != existing.end()) {
                    rows.push_back(*hit);
                    ++result.resumed;
                } else {
                    pending.push_back(rows.size());
                    rows.push_back(probe);
                }
            }

    std::atomic<std::size_t> next{0};
    std::mutex callback_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= pending.size()) return;
            SweepRow& slot = rows[pending[i]];
            slot = run_cell(cfg, slot.C, slot.alpha, slot.k);
            if (on_row) {
                std::lock_guard lock(callback_mutex);
                on_row(slot);
            }
        }
    };
    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), pending.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> threads;
        for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    }
    result.computed = static_cast<int>(pending.size());
    result.report = monotonicity_report(rows, cfg.epsilon);
    result.rows = std::move(rows);
    return result;
}

void write_sweep_rows(std::ostream& out, const std::vector<SweepRow>& rows, OutputFormat format) {
    if (format == OutputFormat::csv) {
        out << SweepRow::csv_header() << '\n';
        for (const SweepRow& r : rows) out << r.csv_row() << '\n';
    } else {
        for (const SweepRow& r : rows) out << r.to_json().dump() << '\n';
    }
}

std::vector<SweepRow> read_sweep_rows(std::istream& in, OutputFormat format) {
    return read_rows_impl(in, format, false);
}

json sweep_metadata(const SweepConfig& cfg, const SweepResult& result) {
    json j;
    j["config"] = cfg.to_json();
    j["workers"] = cfg.workers;
    j["columns"] = SweepRow::csv_header();
    j["rows"] = result.rows.size();
    j["rows_computed"] = result.computed;
    j["rows_resumed"] = result.resumed;
    j["errors"] = std::count_if(result.rows.begin(), result.rows.end(),
                                [](const SweepRow& r) { return !r.ok(); });
    j["seeding"] = "cell seed = derive_seed(root_seed, {C, bits(alpha)}); optimizer seed = "
                   "derive_seed(cell seed, {k}); run seed = derive_seed(optimizer seed, {run_index})";
    j["loss_beta"] = cfg.loss.beta;
    j["monotonicity"] = result.report.to_json();
    return j;
}

SweepResult run_sweep_to_file(const SweepConfig& cfg, const RowCallback& on_row) {
    if (!cfg.output_path) throw ArgumentError("the sweep needs an output path");
    namespace fs = std::filesystem;
    const fs::path out_path(*cfg.output_path);
    const fs::path partial_path = out_path.string() + ".partial";
    const fs::path meta_path = out_path.string() + ".meta.json";
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());

    std::vector<SweepRow> existing;
    if (fs::exists(out_path)) {
        std::ifstream in(out_path);
        existing = read_sweep_rows(in, cfg.output_format);
    }
    if (fs::exists(partial_path)) {
        std::ifstream in(partial_path);
        const auto more = read_rows_impl(in, cfg.output_format, true);
        existing.insert(existing.end(), more.begin(), more.end());
    }

    std::ofstream partial(partial_path, std::ios::app);
    if (!partial) throw Error("cannot open " + partial_path.string() + " for writing");
    if (cfg.output_format == OutputFormat::csv && fs::file_size(partial_path) == 0)
        partial << SweepRow::csv_header() << '\n' << std::flush;

    auto record = [&](const SweepRow& row) {
        if (cfg.output_format == OutputFormat::csv)
            partial << row.csv_row() << '\n';
        else
            partial << row.to_json().dump() << '\n';
        partial.flush();
        if (on_row) on_row(row);
    };
    SweepResult result = run_sweep(cfg, existing, record);
    partial.close();

    const fs::path tmp = out_path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        write_sweep_rows(out, result.rows, cfg.output_format);
    }
    fs::rename(tmp, out_path);
    fs::remove(partial_path);
    std::ofstream meta(meta_path, std::ios::trunc);
    meta << sweep_metadata(cfg, result).dump(2) << '\n';
    return result;
}

}  // namespace ncegeom
