#include "fdareg/csv_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fdareg {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

double parse_cell(const std::string& cell, int row, int col) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    throw std::runtime_error("CSV: cell at row " + std::to_string(row) + ", column " +
                             std::to_string(col) + " is not numeric: '" + cell + "'");
  }
  if (used != cell.size()) {
    throw std::runtime_error("CSV: trailing characters at row " + std::to_string(row) +
                             ", column " + std::to_string(col) + ": '" + cell + "'");
  }
  if (!std::isfinite(v)) {
    throw std::runtime_error("CSV: non-finite value at row " + std::to_string(row) +
                             ", column " + std::to_string(col));
  }
  return v;
}

}  // namespace

FunctionTable load_functions_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("CSV: cannot open '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("CSV: '" + path + "' is empty");
  }
  std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "t") {
    throw std::runtime_error("CSV: header must start with 't' and list one column per function");
  }

  FunctionTable table;
  table.names.assign(header.begin() + 1, header.end());
  const int n = static_cast<int>(table.names.size());

  std::vector<std::vector<double>> rows;
  int row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != n + 1) {
      throw std::runtime_error("CSV: row " + std::to_string(row_no) + " has " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(n + 1));
    }
    std::vector<double> vals(n + 1);
    for (int c = 0; c <= n; ++c) vals[c] = parse_cell(cells[c], row_no, c + 1);
    rows.push_back(std::move(vals));
  }
  const int p = static_cast<int>(rows.size());
  if (p < 4) {
    throw std::runtime_error("CSV: need at least 4 grid rows, got " + std::to_string(p));
  }

  Eigen::VectorXd t(p);
  table.values.resize(p, n);
  for (int j = 0; j < p; ++j) {
    t(j) = rows[j][0];
    for (int i = 0; i < n; ++i) table.values(j, i) = rows[j][i + 1];
  }
  table.grid = TimeGrid::from_points(t);
  return table;
}

void save_functions_csv(const std::string& path, const TimeGrid& grid,
                        const Eigen::MatrixXd& values, const std::vector<std::string>& names) {
  if (values.rows() != grid.size()) {
    throw std::invalid_argument("save_functions_csv: row count must match the grid");
  }
  const int n = static_cast<int>(values.cols());
  if (!names.empty() && static_cast<int>(names.size()) != n) {
    throw std::invalid_argument("save_functions_csv: need one name per column");
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("CSV: cannot write '" + path + "'");
  }
  out << "t";
  for (int i = 0; i < n; ++i) {
    out << "," << (names.empty() ? "f" + std::to_string(i + 1) : names[i]);
  }
  out << "\n";
  for (int j = 0; j < grid.size(); ++j) {
    out << format_double(grid.points(j));
    for (int i = 0; i < n; ++i) out << "," << format_double(values(j, i));
    out << "\n";
  }
}

void save_table_csv(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::string>& row_labels, const Eigen::MatrixXd& values) {
  if (static_cast<int>(row_labels.size()) != values.rows() ||
      static_cast<int>(header.size()) != values.cols() + 1) {
    throw std::invalid_argument("save_table_csv: header/label sizes must match values");
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("CSV: cannot write '" + path + "'");
  }
  for (std::size_t k = 0; k < header.size(); ++k) {
    out << (k == 0 ? "" : ",") << header[k];
  }
  out << "\n";
  for (int r = 0; r < values.rows(); ++r) {
    out << row_labels[r];
    for (int c = 0; c < values.cols(); ++c) out << "," << format_double(values(r, c));
    out << "\n";
  }
}

}  // namespace fdareg
