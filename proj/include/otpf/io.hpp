#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace otpf {

// Shortest decimal form that round-trips the double exactly, so re-running
// a deterministic pipeline reproduces files byte for byte.
std::string format_double(double value);

// CSV with one header row; the matrix supplies the data rows. The path "-"
// writes to stdout.
void write_csv(const std::string& path, const std::vector<std::string>& columns,
               const Eigen::MatrixXd& rows);
void write_csv(std::ostream& out, const std::vector<std::string>& columns,
               const Eigen::MatrixXd& rows);

struct CsvTable {
  std::vector<std::string> columns;
  Eigen::MatrixXd rows;
};

// Reads a numeric CSV written by write_csv (header + double cells).
CsvTable read_csv(const std::string& path);

}  // namespace otpf
