#include "pitrecal/core/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string_view>

#include "pitrecal/core/error.hpp"

namespace pitrecal {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": missing header", 1);
  for (auto field : split(line)) table.header.emplace_back(field);

  const std::size_t cols = table.header.size();
  std::vector<double> values;
  std::size_t line_no = 1;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (fields.size() != cols) {
      throw ParseError(path.string() + ": expected " + std::to_string(cols) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    ++rows;
    for (std::size_t c = 0; c < cols; ++c) {
      double v = 0.0;
      const auto f = fields[c];
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size() || f.empty()) {
        throw ParseError(path.string() + ": cannot parse '" + std::string(f) + "' in column " +
                             table.header[c],
                         line_no);
      }
      if (!std::isfinite(v)) {
        throw ParseError(path.string() + ": non-finite value in row " + std::to_string(rows) +
                             ", column " + table.header[c],
                         line_no);
      }
      values.push_back(v);
    }
  }
  table.values = Eigen::Map<RowMatrix>(values.data(), static_cast<Eigen::Index>(rows),
                                       static_cast<Eigen::Index>(cols));
  return table;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const RowMatrix& values) {
  if (static_cast<Eigen::Index>(header.size()) != values.cols()) {
    throw ConfigError("write_csv: header has " + std::to_string(header.size()) +
                      " names for " + std::to_string(values.cols()) + " columns");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      out << (c ? "," : "") << format_double(values(r, c));
    }
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<std::string> numbered_columns(const std::string& prefix, std::size_t count) {
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 1; i <= count; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

Dataset ingest_csv(const std::filesystem::path& path, const DatasetSchema& schema) {
  auto table = read_csv(path);
  auto expected = numbered_columns("x", schema.features);
  const auto ys = numbered_columns("y", schema.responses);
  expected.insert(expected.end(), ys.begin(), ys.end());
  for (std::size_t c = 0; c < expected.size(); ++c) {
    if (c >= table.header.size() || table.header[c] != expected[c]) {
      throw SchemaError(path.string() + ": missing column " + expected[c]);
    }
  }
  if (table.header.size() != expected.size()) {
    throw SchemaError(path.string() + ": unexpected column " + table.header[expected.size()]);
  }
  Dataset data;
  const auto q = static_cast<Eigen::Index>(schema.features);
  data.x = table.values.leftCols(q);
  data.y = table.values.rightCols(static_cast<Eigen::Index>(schema.responses));
  return data;
}

Dataset ingest_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  if (!in || !std::getline(in, line)) throw Error("cannot read header of " + path.string());
  DatasetSchema schema;
  for (auto field : split(line)) {
    if (!field.empty() && field.front() == 'x') ++schema.features;
    else if (!field.empty() && field.front() == 'y') ++schema.responses;
  }
  return ingest_csv(path, schema);
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  auto header = numbered_columns("x", data.feature_dim());
  const auto ys = numbered_columns("y", data.response_dim());
  header.insert(header.end(), ys.begin(), ys.end());
  RowMatrix all(data.x.rows(), data.x.cols() + data.y.cols());
  all << data.x, data.y;
  write_csv(path, header, all);
}

}  // namespace pitrecal
