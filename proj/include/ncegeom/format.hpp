#pragma once

// Text I/O shared by the CLI and the library: shortest round-trip number
// formatting and headerless CSV matrices.

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace ncegeom {

/// Shortest decimal string that parses back to exactly `x`.
std::string format_double(double x);

/// Strict full-string parse of a decimal number.
bool parse_double(std::string_view text, double& out);

/// Splits one CSV line on commas. Fields may be double-quoted; "" escapes a quote.
std::vector<std::string> split_csv_line(std::string_view line);

/// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_escape(std::string_view field);

/// Headerless CSV of decimals. Blank lines are skipped. Ragged rows and
/// non-numeric cells raise ParseError with the 1-based line number.
Eigen::MatrixXd read_csv_matrix(std::istream& in);
void write_csv_matrix(std::ostream& out, const Eigen::MatrixXd& M);

}  // namespace ncegeom
