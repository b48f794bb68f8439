#pragma once

#include <string>
#include <variant>
#include <vector>

namespace prinstrat {

enum class ColumnType { Number, Text };

struct Column {
  std::string name;
  ColumnType type = ColumnType::Number;
};

using Cell = std::variant<double, std::string>;

/// Typed rectangular table used for every machine-readable output.
struct Table {
  std::vector<Column> columns;
  std::vector<std::vector<Cell>> rows;

  std::size_t col(const std::string& name) const;
  /// Appends a row; throws ConfigError on a width or type mismatch.
  void add_row(std::vector<Cell> row);
  double number(std::size_t row, const std::string& column) const;
  const std::string& text(std::size_t row, const std::string& column) const;

  /// Numbers as %.17g (nan, inf, -inf for non-finite); text always quoted.
  std::string to_csv() const;
  /// Inverse of to_csv, given the expected column types.
  static Table from_csv(const std::string& csv, const std::vector<Column>& schema);

  friend bool operator==(const Table& a, const Table& b);
};

std::string format_number(double v);
double parse_number(const std::string& s);

}  // namespace prinstrat
