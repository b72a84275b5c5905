#pragma once

#include <string>
#include <vector>

namespace couplab::csvio {

// Numeric table with a named, versioned schema. Files carry the schema on a
// leading comment line ("# couplab-csv v1 <schema>") so downstream plotting
// can pin itself to a layout.
struct CsvTable {
  std::string schema;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;  // each row matches columns
};

// Writes the table at full precision (%.17g) through a temp file renamed
// into place, so readers never observe a partial file. Throws
// std::runtime_error on I/O failure and std::invalid_argument on a row
// width mismatch.
void write_csv(const CsvTable& table, const std::string& path);

// Reads a file written by write_csv back; validates the version line.
CsvTable read_csv(const std::string& path);

}  // namespace couplab::csvio
