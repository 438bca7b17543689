#pragma once

#include <istream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace ncegeom {

/// Labeled embedding dump: one row of `vectors` per example.
struct LabeledEmbeddings {
    std::vector<std::string> labels;
    Eigen::MatrixXd vectors;
    /// Distinct labels in order of first appearance.
    std::vector<std::string> classes;

    /// Row indices of class `c`; ArgumentError if absent.
    std::vector<Eigen::Index> rows_of(const std::string& c) const;
    Eigen::VectorXd class_mean(const std::string& c) const;
};

struct LoadOptions {
    /// Scale every vector to unit norm (zero vectors are rejected).
    bool normalize = false;
    /// Reject vectors whose norm differs from 1 by more than 1e-3.
    bool strict_unit_norm = false;
};

/// Reads CSV with header exactly `label,x0,...,x{d-1}`.
LabeledEmbeddings load_embeddings(std::istream& in, const LoadOptions& opts = {});

/// Mean squared distance of class-c vectors from their class mean.
double intra_var(const LabeledEmbeddings& emb, const std::string& c);

/// arccos((2 - alpha)/2) in degrees, for alpha in [0, 2]: the rough angle
/// between a random class member and its class mean.
double angle_proxy(double alpha);

struct CosineSimilarity {
    std::vector<std::string> classes;
    Eigen::MatrixXd matrix;  // cosine of class means, unit diagonal
    double offdiag_mean = 0.0;
    double offdiag_std = 0.0;  // population std over pairs c1 < c2
};

CosineSimilarity cosine_similarity_matrix(const LabeledEmbeddings& emb);

/// Per-class intra_var and angle, mean intra_var with its angle, and the
/// cosine-similarity summary. Keys are sorted.
nlohmann::json metrics_json(const LabeledEmbeddings& emb);

/// Rows `metric,class_a,class_b,value` (header included).
std::string metrics_csv(const LabeledEmbeddings& emb);

}  // namespace ncegeom
