#include "ncegeom/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "ncegeom/error.hpp"
#include "ncegeom/format.hpp"

namespace ncegeom {

std::vector<Eigen::Index> LabeledEmbeddings::rows_of(const std::string& c) const {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == c) rows.push_back(static_cast<Eigen::Index>(i));
    if (rows.empty()) throw ArgumentError("unknown class '" + c + "'");
    return rows;
}

Eigen::VectorXd LabeledEmbeddings::class_mean(const std::string& c) const {
    const auto rows = rows_of(c);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(vectors.cols());
    for (Eigen::Index r : rows) mean += vectors.row(r).transpose();
    return mean / static_cast<double>(rows.size());
}

LabeledEmbeddings load_embeddings(std::istream& in, const LoadOptions& opts) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("missing header", 1);
    const auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "label")
        throw ParseError("header must start with 'label' followed by x0..x{d-1}", 1);
    for (std::size_t i = 1; i < header.size(); ++i)
        if (header[i] != "x" + std::to_string(i - 1))
            throw ParseError("header column " + std::to_string(i + 1) + " must be 'x" +
                                 std::to_string(i - 1) + "'",
                             1);
    const std::size_t d = header.size() - 1;

    LabeledEmbeddings emb;
    std::vector<double> values;
    std::size_t lineno = 1;
    std::unordered_map<std::string, bool> seen;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != d + 1)
            throw ParseError("ragged row: expected " + std::to_string(d + 1) + " fields, got " +
                                 std::to_string(cells.size()),
                             lineno);
        if (cells[0].empty()) throw ParseError("empty label", lineno);
        std::vector<double> v(d);
        for (std::size_t j = 0; j < d; ++j) {
            if (!parse_double(cells[j + 1], v[j]) || !std::isfinite(v[j]))
                throw ParseError("non-numeric cell '" + cells[j + 1] + "'", lineno);
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (opts.normalize) {
            if (norm == 0.0) throw ParseError("zero vector cannot be normalized", lineno);
            for (double& x : v) x /= norm;
        } else if (opts.strict_unit_norm && std::abs(norm - 1.0) > 1e-3) {
            throw ParseError("vector norm " + format_double(norm) + " is not within 1e-3 of 1",
                             lineno);
        }
        if (!seen[cells[0]]) {
            seen[cells[0]] = true;
            emb.classes.push_back(cells[0]);
        }
        emb.labels.push_back(cells[0]);
        values.insert(values.end(), v.begin(), v.end());
    }
    if (emb.labels.empty()) throw ParseError("no data rows", lineno);
    emb.vectors = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.data(), static_cast<Eigen::Index>(emb.labels.size()), static_cast<Eigen::Index>(d));
    return emb;
}

double intra_var(const LabeledEmbeddings& emb, const std::string& c) {
    const auto rows = emb.rows_of(c);
    const Eigen::VectorXd mean = emb.class_mean(c);
    double total = 0.0;
    for (Eigen::Index r : rows) total += (emb.vectors.row(r).transpose() - mean).squaredNorm();
    return total / static_cast<double>(rows.size());
}

double angle_proxy(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 2.0))
        throw ArgumentError("angle_proxy needs alpha in [0, 2]");
    return std::acos((2.0 - alpha) / 2.0) * 180.0 / std::numbers::pi;
}

CosineSimilarity cosine_similarity_matrix(const LabeledEmbeddings& emb) {
    const std::size_t C = emb.classes.size();
    if (C < 2) throw ArgumentError("cosine similarities need at least 2 classes");
    std::vector<Eigen::VectorXd> means;
    for (const std::string& c : emb.classes) {
        Eigen::VectorXd m = emb.class_mean(c);
        const double n = m.norm();
        if (!(n > 0.0)) throw NumericError("class '" + c + "' has a zero mean vector");
        means.push_back(m / n);
    }
    CosineSimilarity out;
    out.classes = emb.classes;
    out.matrix = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(C));
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < C; ++i)
        for (std::size_t j = i + 1; j < C; ++j) {
            const double cs = std::clamp(means[i].dot(means[j]), -1.0, 1.0);
            out.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cs;
            out.matrix(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = cs;
            sum += cs;
            ++pairs;
        }
    out.offdiag_mean = sum / static_cast<double>(pairs);
    double sq = 0.0;
    for (std::size_t i = 0; i < C; ++i)
        for (std::size_t j = i + 1; j < C; ++j) {
            const double dev =
                out.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - out.offdiag_mean;
            sq += dev * dev;
        }
    out.offdiag_std = std::sqrt(sq / static_cast<double>(pairs));
    return out;
}

nlohmann::json metrics_json(const LabeledEmbeddings& emb) {
    nlohmann::json j;
    nlohmann::json per_class = nlohmann::json::object();
    double mean_iv = 0.0;
    for (const std::string& c : emb.classes) {
        const double iv = intra_var(emb, c);
        mean_iv += iv;
        per_class[c] = {{"intra_var", iv}, {"angle_deg", angle_proxy(std::clamp(iv, 0.0, 2.0))}};
    }
    mean_iv /= static_cast<double>(emb.classes.size());
    j["classes"] = per_class;
    j["mean_intra_var"] = mean_iv;
    j["mean_intra_var_angle_deg"] = angle_proxy(std::clamp(mean_iv, 0.0, 2.0));
    if (emb.classes.size() >= 2) {
        const CosineSimilarity cs = cosine_similarity_matrix(emb);
        nlohmann::json m = nlohmann::json::array();
        for (Eigen::Index r = 0; r < cs.matrix.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index c = 0; c < cs.matrix.cols(); ++c) row.push_back(cs.matrix(r, c));
            m.push_back(row);
        }
        j["cs"] = {{"classes", cs.classes},
                   {"matrix", m},
                   {"offdiag_mean", cs.offdiag_mean},
                   {"offdiag_std", cs.offdiag_std}};
    }
    return j;
}

std::string metrics_csv(const LabeledEmbeddings& emb) {
    std::ostringstream out;
    out << "metric,class_a,class_b,value\n";
    double mean_iv = 0.0;
    for (const std::string& c : emb.classes) {
        const double iv = intra_var(emb, c);
        mean_iv += iv;
        out << "intra_var," << csv_escape(c) << ",," << format_double(iv) << '\n';
        out << "angle_deg," << csv_escape(c) << ",," << format_double(angle_proxy(std::clamp(iv, 0.0, 2.0)))
            << '\n';
    }
    mean_iv /= static_cast<double>(emb.classes.size());
    out << "mean_intra_var,,," << format_double(mean_iv) << '\n';
    out << "mean_intra_var_angle_deg,,," << format_double(angle_proxy(std::clamp(mean_iv, 0.0, 2.0)))
        << '\n';
    if (emb.classes.size() >= 2) {
        const CosineSimilarity cs = cosine_similarity_matrix(emb);
        for (std::size_t i = 0; i < cs.classes.size(); ++i)
            for (std::size_t j = i + 1; j < cs.classes.size(); ++j)
                out << "cs," << csv_escape(cs.classes[i]) << ',' << csv_escape(cs.classes[j]) << ','
                    << format_double(cs.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)))
                    << '\n';
        out << "cs_offdiag_mean,,," << format_double(cs.offdiag_mean) << '\n';
        out << "cs_offdiag_std,,," << format_double(cs.offdiag_std) << '\n';
    }
    return out.str();
}

}  // namespace ncegeom
