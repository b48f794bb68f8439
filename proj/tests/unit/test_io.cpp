#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "prinstrat/error.hpp"
#include "prinstrat/io.hpp"
#include "prinstrat/table.hpp"

using namespace prinstrat;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::ConfigError;
}

}  // namespace

TEST_CASE("parse_csv handles quoting, CRLF and BOM", "[io]") {
  const auto recs = parse_csv("\xEF\xBB\xBF" "a,\"b,c\",\"say \"\"hi\"\"\"\r\n\r\n1,2,\"multi\nline\"\r\n");
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].fields[0].value == "a");
  CHECK(recs[0].fields[1].value == "b,c");
  CHECK(recs[0].fields[2].value == "say \"hi\"");
  CHECK(recs[0].fields[2].quoted);
  CHECK(recs[1].line == 3);
  CHECK(recs[1].fields[2].value == "multi\nline");
  CHECK(code_of([] { parse_csv("a,\"b\n"); }) == ErrorCode::ParseError);
}

TEST_CASE("load a toy dataset", "[io]") {
  const std::string text = "y,d,z,x1,x2,x3\n1.5,1,1,0.1,0.2,0.3\n2,0,1,1,2,3\n-1,1,0,0,0,0\n0.25,1,0,5,6,7\n";
  const auto loaded = parse_dataset_csv(text, {});
  CHECK(loaded.ds.n() == 4);
  CHECK(loaded.ds.x.cols() == 3);
  CHECK(loaded.ds.x_names == std::vector<std::string>{"x1", "x2", "x3"});
  CHECK(loaded.ds.x(3, 2) == 7.0);
  CHECK(loaded.exclusions.empty());
  REQUIRE_FALSE(loaded.log.empty());
  CHECK(loaded.log.back().find("0 rows excluded") != std::string::npos);
}

TEST_CASE("load_csv errors", "[io]") {
  CHECK(code_of([] { parse_dataset_csv("y,d,z,x1\n1,2,1,0\n", {}); }) == ErrorCode::DomainError);
  try {
    parse_dataset_csv("y,d,z,x1\n1,1,1,0\n1,2,1,0\n", {});
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK(code_of([] { parse_dataset_csv("y,d,x1\n1,1,0\n", {}); }) == ErrorCode::SchemaError);
  CHECK(code_of([] { parse_dataset_csv("y,d,z,x1\n1,1,1,abc\n", {}); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse_dataset_csv("y,d,z,x1\n1,1,1\n", {}); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse_dataset_csv("y,d,z,x1\n,1,1,0\n", {}); }) == ErrorCode::DomainError);
  CHECK(code_of([] { read_file("/nonexistent/file.csv"); }) == ErrorCode::SchemaError);
}

TEST_CASE("missing outcomes are allowed where they are never read", "[io]") {
  const std::string text = "y,d,z,x1\n1,1,1,0\n,0,1,1\n2,1,0,0\n,0,0,1\n";
  const auto loaded = parse_dataset_csv(text, {});
  CHECK(std::isnan(loaded.ds.y[1]));
  ColumnMapping m;
  m.strata = {{0, 1}};
  m.outcome_defined_when_d0 = true;
  CHECK(code_of([&] { parse_dataset_csv(text, m); }) == ErrorCode::DomainError);
}

TEST_CASE("column mapping and theta column", "[io]") {
  const std::string text = "outcome,treat,mid,age,th,skip\n1,1,0,30,2,9\n2,0,1,40,0.5,9\n";
  ColumnMapping m;
  m.y = "outcome";
  m.z = "treat";
  m.d = "mid";
  m.x = {"age"};
  m.theta = "th";
  const auto loaded = parse_dataset_csv(text, m);
  CHECK(loaded.ds.x.cols() == 1);
  CHECK(loaded.theta == std::vector<double>{2.0, 0.5});
  CHECK(loaded.ds.z == std::vector<int>{1, 0});
  m.x = {"height"};
  CHECK(code_of([&] { parse_dataset_csv(text, m); }) == ErrorCode::SchemaError);
}

TEST_CASE("table round trip", "[io][table]") {
  Table t;
  t.columns = {{"name", ColumnType::Text}, {"value", ColumnType::Number}, {"se", ColumnType::Number}};
  t.add_row({std::string("a,\"b\""), 0.1 + 0.2, std::numeric_limits<double>::quiet_NaN()});
  t.add_row({std::string("plain"), -std::numeric_limits<double>::infinity(), 1e-300});
  t.add_row({std::string(""), 123456789.123456789, std::numeric_limits<double>::infinity()});
  const std::string csv = t.to_csv();
  const Table back = Table::from_csv(csv, t.columns);
  CHECK(back == t);
  CHECK(back.to_csv() == csv);
  CHECK(back.number(0, "value") == 0.1 + 0.2);
  CHECK_THROWS_AS(t.add_row({1.0, 2.0, 3.0}), Error);
  CHECK_THROWS_AS(t.add_row({std::string("x")}), Error);
  CHECK(format_number(0.5) == "0.5");
  CHECK(std::isnan(parse_number("nan")));
  CHECK_THROWS_AS(parse_number("1.0x"), Error);
}

TEST_CASE("file helpers", "[io]") {
  const auto path = (std::filesystem::temp_directory_path() / "prinstrat_io_test.csv").string();
  write_file(path, "y,d,z,x\n1,1,1,2\n");
  const auto loaded = load_csv(path, {});
  CHECK(loaded.ds.n() == 1);
  std::filesystem::remove(path);
}
