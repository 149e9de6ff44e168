#include "otpf/io.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "otpf/errors.hpp"

namespace otpf {

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

void write_csv(std::ostream& out, const std::vector<std::string>& columns,
               const Eigen::MatrixXd& rows) {
  if (static_cast<Eigen::Index>(columns.size()) != rows.cols())
    throw config_error("column names do not match the data width");
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (c) out << ',';
    out << columns[c];
  }
  out << '\n';
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      if (j) out << ',';
      out << format_double(rows(i, j));
    }
    out << '\n';
  }
}

void write_csv(const std::string& path, const std::vector<std::string>& columns,
               const Eigen::MatrixXd& rows) {
  if (path == "-") {
    write_csv(std::cout, columns, rows);
    return;
  }
  std::ofstream out(path);
  if (!out) throw config_error("cannot open '" + path + "' for writing");
  write_csv(out, columns, rows);
  if (!out) throw config_error("write to '" + path + "' failed");
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw config_error("'" + path + "' is empty");
  std::stringstream header(line);
  std::string cell;
  while (std::getline(header, cell, ',')) table.columns.push_back(cell);
  if (table.columns.empty()) throw config_error("'" + path + "' has no columns");

  std::vector<double> cells;
  Eigen::Index n_rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    Eigen::Index got = 0;
    while (std::getline(row, cell, ',')) {
      try {
        cells.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw config_error("'" + path + "' has a non-numeric cell: " + cell);
      }
      ++got;
    }
    if (got != static_cast<Eigen::Index>(table.columns.size()))
      throw config_error("'" + path + "' row " + std::to_string(n_rows + 1) +
                         " has " + std::to_string(got) + " cells, expected " +
                         std::to_string(table.columns.size()));
    ++n_rows;
  }
  table.rows.resize(n_rows, static_cast<Eigen::Index>(table.columns.size()));
  for (Eigen::Index i = 0; i < n_rows; ++i)
    for (Eigen::Index j = 0; j < table.rows.cols(); ++j)
      table.rows(i, j) = cells[i * table.rows.cols() + j];
  return table;
}

}  // namespace otpf
