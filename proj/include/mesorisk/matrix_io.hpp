#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mesorisk {

// Shortest round-trip decimal representation.
std::string format_double(double value);

// Row-major CSV. The header row holds the column labels when given.
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& column_labels = {});
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& column_labels = {});

// Binary form: magic "MRK1", uint64 rows, uint64 cols, then rows*cols
// float64 values in row-major order. All little-endian.
void write_matrix_binary(std::ostream& out, const Eigen::MatrixXd& m);
void write_matrix_binary(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_binary(std::istream& in);
Eigen::MatrixXd read_matrix_binary(const std::filesystem::path& path);

}  // namespace mesorisk
