#pragma once

#include <string>
#include <vector>

#include "prinstrat/dataset.hpp"
#include "prinstrat/strata.hpp"

namespace prinstrat {

struct CsvField {
  std::string value;
  bool quoted = false;
};

struct CsvRecord {
  /// 1-based physical line where the record starts.
  std::size_t line = 0;
  std::vector<CsvField> fields;
};

/// RFC 4180 records (quoted fields, doubled quotes, CRLF, leading BOM). Blank lines are skipped.
std::vector<CsvRecord> parse_csv(const std::string& text);

struct ColumnMapping {
  std::string y = "y";
  std::string d = "d";
  std::string z = "z";
  /// Covariate columns; empty selects every column not otherwise mapped.
  std::vector<std::string> x;
  /// Optional per-row θ column.
  std::string theta;
  /// Strata the analysis will read; decides which missing outcomes are errors.
  std::vector<Stratum> strata{{1, 1}};
  bool outcome_defined_when_d0 = false;
};

struct LoadedData {
  Dataset ds;
  std::vector<double> theta;
  std::vector<std::string> log;
  /// Rows not used, with reasons. Loading never drops rows, so this stays empty unless a caller adds to it.
  std::vector<std::string> exclusions;
};

LoadedData load_csv(const std::string& path, const ColumnMapping& mapping);
LoadedData parse_dataset_csv(const std::string& text, const ColumnMapping& mapping, const std::string& source = "<memory>");

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace prinstrat
