#include "couplab/csvio.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace couplab::csvio {

void write_csv(const CsvTable& table, const std::string& path) {
  if (table.columns.empty())
    throw std::invalid_argument("write_csv: no columns");
  for (const auto& row : table.rows)
    if (row.size() != table.columns.size())
      throw std::invalid_argument("write_csv: row width mismatch");

  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("write_csv: cannot open " + tmp);
    out << "# couplab-csv v1 " << table.schema << "\n";
    for (std::size_t i = 0; i < table.columns.size(); ++i)
      out << (i ? "," : "") << table.columns[i];
    out << "\n";
    char buf[64];
    for (const auto& row : table.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", row[i]);
        out << (i ? "," : "") << buf;
      }
      out << "\n";
    }
    if (!out) throw std::runtime_error("write_csv: write failed on " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# couplab-csv v1 ", 0) != 0)
    throw std::runtime_error("read_csv: missing version line in " + path);
  t.schema = line.substr(17);
  if (!std::getline(in, line))
    throw std::runtime_error("read_csv: missing header in " + path);
  {
    std::istringstream hs(line);
    std::string col;
    while (std::getline(hs, col, ',')) t.columns.push_back(col);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream rs(line);
    std::string cell;
    while (std::getline(rs, cell, ','))
      row.push_back(std::strtod(cell.c_str(), nullptr));
    if (row.size() != t.columns.size())
      throw std::runtime_error("read_csv: ragged row in " + path);
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace couplab::csvio
