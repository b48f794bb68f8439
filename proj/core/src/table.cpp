#include "prinstrat/table.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "prinstrat/error.hpp"
#include "prinstrat/io.hpp"

namespace prinstrat {

namespace {

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

bool same_number(double a, double b) {
  if (std::isnan(a) || std::isnan(b)) return std::isnan(a) && std::isnan(b);
  return a == b && std::signbit(a) == std::signbit(b);
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_number(const std::string& s) {
  if (s == "nan" || s == "NaN") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf" || s == "Infinity") return std::numeric_limits<double>::infinity();
  if (s == "-inf" || s == "-Infinity") return -std::numeric_limits<double>::infinity();
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (e[-1] == ' ' || e[-1] == '\t')) --e;
  if (b < e && *b == '+') ++b;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || b == e) throw Error(ErrorCode::ParseError, "'" + s + "' is not a number");
  return v;
}

std::size_t Table::col(const std::string& name) const {
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j].name == name) return j;
  }
  throw Error(ErrorCode::SchemaError, "table has no column '" + name + "'");
}

void Table::add_row(std::vector<Cell> row) {
  if (row.size() != columns.size()) throw Error(ErrorCode::ConfigError, "row width does not match table columns");
  for (std::size_t j = 0; j < row.size(); ++j) {
    const bool is_num = std::holds_alternative<double>(row[j]);
    if (is_num != (columns[j].type == ColumnType::Number)) {
      throw Error(ErrorCode::ConfigError, "cell type mismatch in column '" + columns[j].name + "'");
    }
  }
  rows.push_back(std::move(row));
}

double Table::number(std::size_t row, const std::string& column) const { return std::get<double>(rows.at(row).at(col(column))); }

const std::string& Table::text(std::size_t row, const std::string& column) const {
  return std::get<std::string>(rows.at(row).at(col(column)));
}

std::string Table::to_csv() const {
  std::string out;
  for (std::size_t j = 0; j < columns.size(); ++j) out += (j ? "," : "") + columns[j].name;
  out += "\n";
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (j) out += ",";
      if (const double* v = std::get_if<double>(&r[j])) {
        out += format_number(*v);
      } else {
        out += quote(std::get<std::string>(r[j]));
      }
    }
    out += "\n";
  }
  return out;
}

Table Table::from_csv(const std::string& csv, const std::vector<Column>& schema) {
  const auto recs = parse_csv(csv);
  if (recs.empty()) throw Error(ErrorCode::SchemaError, "table CSV has no header");
  Table t;
  t.columns = schema;
  if (recs[0].fields.size() != schema.size()) throw Error(ErrorCode::SchemaError, "table header width differs from schema");
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (recs[0].fields[j].value != schema[j].name) {
      throw Error(ErrorCode::SchemaError, "expected column '" + schema[j].name + "', found '" + recs[0].fields[j].value + "'");
    }
  }
  for (std::size_t i = 1; i < recs.size(); ++i) {
    std::vector<Cell> row;
    for (std::size_t j = 0; j < recs[i].fields.size(); ++j) {
      const auto& f = recs[i].fields[j];
      if (j < schema.size() && schema[j].type == ColumnType::Number) {
        row.emplace_back(parse_number(f.value));
      } else {
        row.emplace_back(f.value);
      }
    }
    t.add_row(std::move(row));
  }
  return t;
}

bool operator==(const Table& a, const Table& b) {
  if (a.columns.size() != b.columns.size() || a.rows.size() != b.rows.size()) return false;
  for (std::size_t j = 0; j < a.columns.size(); ++j) {
    if (a.columns[j].name != b.columns[j].name || a.columns[j].type != b.columns[j].type) return false;
  }
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    for (std::size_t j = 0; j < a.columns.size(); ++j) {
      const Cell& x = a.rows[i][j];
      const Cell& y = b.rows[i][j];
      if (x.index() != y.index()) return false;
      if (x.index() == 0) {
        if (!same_number(std::get<double>(x), std::get<double>(y))) return false;
      } else if (std::get<std::string>(x) != std::get<std::string>(y)) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace prinstrat
