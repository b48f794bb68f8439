#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace prinstrat {

enum class DesignKind { Raw, Transformed };

/// Observed data (Y, D, Z, X). Missing outcomes are stored as NaN.
struct Dataset {
  Eigen::VectorXd y;
  std::vector<int> d;
  std::vector<int> z;
  Eigen::MatrixXd x;
  /// Optional alternative design (same rows); empty when absent.
  Eigen::MatrixXd x_transformed;
  std::vector<std::string> x_names;

  std::size_t n() const { return d.size(); }
  bool has_transformed() const { return x_transformed.rows() > 0; }

  /// Throws SchemaError / DomainError on inconsistent lengths, non-binary d or z, or non-finite x.
  void validate() const;

  const Eigen::MatrixXd& design(DesignKind kind) const;
  Dataset subset(const std::vector<std::size_t>& rows) const;
  std::vector<std::size_t> cell_rows(int z_value, int d_value) const;
};

/// Rows of m (by index) gathered into a new matrix.
Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows);
Eigen::VectorXd take_rows(const Eigen::VectorXd& v, const std::vector<std::size_t>& rows);

}  // namespace prinstrat
