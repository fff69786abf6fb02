#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pitrecal/core/dataset.hpp"
#include "pitrecal/core/matrix.hpp"

namespace pitrecal {

struct CsvTable {
  std::vector<std::string> header;
  RowMatrix values;
};

// Reads a numeric CSV with a header line. Malformed rows raise ParseError with
// the file line number; NaN or infinite entries are rejected citing the data
// row (1-based, header excluded).
CsvTable read_csv(const std::filesystem::path& path);

// Values are written with 17 significant digits so that they round-trip.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const RowMatrix& values);

std::string format_double(double v);

// Names prefix1..prefixN.
std::vector<std::string> numbered_columns(const std::string& prefix, std::size_t count);

struct DatasetSchema {
  std::size_t features = 0;
  std::size_t responses = 0;
};

// Loads a dataset whose header is exactly x1..xq,y1..yd.
Dataset ingest_csv(const std::filesystem::path& path, const DatasetSchema& schema);

// Same, inferring q and d from the header.
Dataset ingest_csv(const std::filesystem::path& path);

void write_dataset(const std::filesystem::path& path, const Dataset& data);

}  // namespace pitrecal
