#include "prinstrat/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "prinstrat/error.hpp"
#include "prinstrat/nuisance.hpp"
#include "prinstrat/table.hpp"

namespace prinstrat {

namespace {

std::string where(const std::string& source, std::size_t line, const std::string& column) {
  return source + ": line " + std::to_string(line) + ", column '" + column + "'";
}

double cell_number(const CsvField& f, const std::string& source, std::size_t line, const std::string& column) {
  try {
    return parse_number(f.value);
  } catch (const Error&) {
    throw Error(ErrorCode::ParseError, where(source, line, column) + ": '" + f.value + "' is not a number");
  }
}

int cell_binary(const CsvField& f, const std::string& source, std::size_t line, const std::string& column) {
  const double v = cell_number(f, source, line, column);
  if (v != 0.0 && v != 1.0) {
    throw Error(ErrorCode::DomainError, where(source, line, column) + ": value " + f.value + " is not 0/1");
  }
  return static_cast<int>(v);
}

}  // namespace

std::vector<CsvRecord> parse_csv(const std::string& text) {
  std::vector<CsvRecord> out;
  std::size_t i = 0;
  std::size_t line = 1;
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF && static_cast<unsigned char>(text[1]) == 0xBB &&
      static_cast<unsigned char>(text[2]) == 0xBF) {
    i = 3;
  }
  const std::size_t n = text.size();
  while (i < n) {
    CsvRecord rec;
    rec.line = line;
    CsvField field;
    bool end_of_record = false;
    while (!end_of_record) {
      if (i < n && text[i] == '"') {
        field.quoted = true;
        ++i;
        bool closed = false;
        while (i < n) {
          if (text[i] == '"') {
            if (i + 1 < n && text[i + 1] == '"') {
              field.value += '"';
              i += 2;
              continue;
            }
            ++i;
            closed = true;
            break;
          }
          if (text[i] == '\n') ++line;
          field.value += text[i++];
        }
        if (!closed) throw Error(ErrorCode::ParseError, "line " + std::to_string(rec.line) + ": unterminated quoted field");
      }
      while (i < n && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
        if (field.quoted) {
          throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": characters after closing quote");
        }
        field.value += text[i++];
      }
      if (i >= n) {
        end_of_record = true;
      } else if (text[i] == ',') {
        ++i;
      } else {
        if (text[i] == '\r') ++i;
        if (i < n && text[i] == '\n') ++i;
        ++line;
        end_of_record = true;
      }
      rec.fields.push_back(std::move(field));
      field = CsvField{};
    }
    const bool blank = rec.fields.size() == 1 && !rec.fields[0].quoted && rec.fields[0].value.empty();
    if (!blank) out.push_back(std::move(rec));
  }
  return out;
}

LoadedData parse_dataset_csv(const std::string& text, const ColumnMapping& mapping, const std::string& source) {
  const auto records = parse_csv(text);
  if (records.empty()) throw Error(ErrorCode::SchemaError, source + ": file is empty (no header)");
  std::vector<std::string> header;
  for (const auto& f : records[0].fields) header.push_back(f.value);
  auto find = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorCode::SchemaError, source + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t iy = find(mapping.y);
  const std::size_t id = find(mapping.d);
  const std::size_t iz = find(mapping.z);
  const bool has_theta = !mapping.theta.empty();
  const std::size_t ith = has_theta ? find(mapping.theta) : 0;
  std::vector<std::string> xs = mapping.x;
  if (xs.empty()) {
    for (const auto& h : header) {
      if (h != mapping.y && h != mapping.d && h != mapping.z && (!has_theta || h != mapping.theta)) xs.push_back(h);
    }
  }
  if (xs.empty()) throw Error(ErrorCode::SchemaError, source + ": no covariate columns");
  std::vector<std::size_t> ix;
  for (const auto& c : xs) ix.push_back(find(c));

  const std::size_t n = records.size() - 1;
  LoadedData out;
  Dataset& ds = out.ds;
  ds.y.resize(static_cast<Eigen::Index>(n));
  ds.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(xs.size()));
  ds.d.resize(n);
  ds.z.resize(n);
  ds.x_names = xs;
  if (has_theta) out.theta.resize(n);
  const auto need = needed_outcome_cells(mapping.strata);
  std::size_t missing_y = 0;

  for (std::size_t r = 0; r < n; ++r) {
    const CsvRecord& rec = records[r + 1];
    if (rec.fields.size() != header.size()) {
      throw Error(ErrorCode::ParseError, source + ": line " + std::to_string(rec.line) + " has " +
                                             std::to_string(rec.fields.size()) + " fields, header has " +
                                             std::to_string(header.size()));
    }
    const auto rr = static_cast<Eigen::Index>(r);
    ds.d[r] = cell_binary(rec.fields[id], source, rec.line, mapping.d);
    ds.z[r] = cell_binary(rec.fields[iz], source, rec.line, mapping.z);
    for (std::size_t j = 0; j < ix.size(); ++j) {
      const CsvField& f = rec.fields[ix[j]];
      if (f.value.empty()) throw Error(ErrorCode::ParseError, where(source, rec.line, xs[j]) + ": empty covariate");
      const double v = cell_number(f, source, rec.line, xs[j]);
      if (!std::isfinite(v)) throw Error(ErrorCode::DomainError, where(source, rec.line, xs[j]) + ": non-finite covariate");
      ds.x(rr, static_cast<Eigen::Index>(j)) = v;
    }
    if (has_theta) {
      const CsvField& f = rec.fields[ith];
      if (f.value.empty()) throw Error(ErrorCode::ParseError, where(source, rec.line, mapping.theta) + ": empty theta");
      out.theta[r] = cell_number(f, source, rec.line, mapping.theta);
    }
    const CsvField& fy = rec.fields[iy];
    if (fy.value.empty()) {
      ds.y[rr] = std::numeric_limits<double>::quiet_NaN();
      ++missing_y;
      const bool read = need[static_cast<std::size_t>(ds.z[r])][static_cast<std::size_t>(ds.d[r])];
      if (read && (ds.d[r] == 1 || mapping.outcome_defined_when_d0)) {
        throw Error(ErrorCode::DomainError, where(source, rec.line, mapping.y) +
                                                ": outcome is empty but the requested strata read it (Z=" +
                                                std::to_string(ds.z[r]) + ", D=" + std::to_string(ds.d[r]) + ")");
      }
    } else {
      ds.y[rr] = cell_number(fy, source, rec.line, mapping.y);
    }
  }
  ds.validate();
  std::ostringstream os;
  os << source << ": " << n << " rows, " << xs.size() << " covariates, " << missing_y << " missing outcomes (kept as undefined), "
     << "0 rows excluded";
  out.log.push_back(os.str());
  return out;
}

LoadedData load_csv(const std::string& path, const ColumnMapping& mapping) {
  return parse_dataset_csv(read_file(path), mapping, path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::SchemaError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write '" + path + "'");
  out << content;
  if (!out) throw Error(ErrorCode::ConfigError, "failed writing '" + path + "'");
}

}  // namespace prinstrat
