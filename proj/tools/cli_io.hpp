#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ncegeom/latent_model.hpp"
#include "ncegeom/losses.hpp"

namespace ncegeom::cli {

/// `uniform:C`, an inline list such as `0.2,0.3,0.5`, or the path of a CSV
/// file holding one row or one column of probabilities.
ClassDistribution parse_rho_spec(const std::string& spec);

/// `8`, an inclusive range `10:200`, or a list `1,2,4`.
std::vector<int> parse_k_spec(const std::string& spec);

/// Headerless CSV matrix from a file.
Eigen::MatrixXd read_matrix_file(const std::string& path);

LossSpec make_loss(const std::string& kind, double beta);

}  // namespace ncegeom::cli
