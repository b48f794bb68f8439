#include "prinstrat/dataset.hpp"

#include <cmath>

#include "prinstrat/error.hpp"

namespace prinstrat {

void Dataset::validate() const {
  const auto nn = static_cast<Eigen::Index>(n());
  if (static_cast<std::size_t>(y.size()) != n() || z.size() != n() || x.rows() != nn) {
    throw Error(ErrorCode::SchemaError, "y, d, z and x must have the same number of rows");
  }
  if (has_transformed() && x_transformed.rows() != nn) {
    throw Error(ErrorCode::SchemaError, "transformed design has a different number of rows");
  }
  for (std::size_t i = 0; i < n(); ++i) {
    if (d[i] != 0 && d[i] != 1) {
      throw Error(ErrorCode::DomainError, "d must be 0/1 (row " + std::to_string(i) + ")");
    }
    if (z[i] != 0 && z[i] != 1) {
      throw Error(ErrorCode::DomainError, "z must be 0/1 (row " + std::to_string(i) + ")");
    }
  }
  if (!x.allFinite()) throw Error(ErrorCode::DomainError, "covariates contain non-finite values");
}

const Eigen::MatrixXd& Dataset::design(DesignKind kind) const {
  if (kind == DesignKind::Transformed) {
    if (!has_transformed()) throw Error(ErrorCode::ConfigError, "no transformed design available");
    return x_transformed;
  }
  return x;
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.y = take_rows(y, rows);
  out.x = take_rows(x, rows);
  if (has_transformed()) out.x_transformed = take_rows(x_transformed, rows);
  out.d.reserve(rows.size());
  out.z.reserve(rows.size());
  for (auto r : rows) {
    out.d.push_back(d[r]);
    out.z.push_back(z[r]);
  }
  out.x_names = x_names;
  return out;
}

std::vector<std::size_t> Dataset::cell_rows(int z_value, int d_value) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n(); ++i) {
    if (z[i] == z_value && d[i] == d_value) rows.push_back(i);
  }
  return rows;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

Eigen::VectorXd take_rows(const Eigen::VectorXd& v, const std::vector<std::size_t>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[static_cast<Eigen::Index>(rows[i])];
  return out;
}

}  // namespace prinstrat
