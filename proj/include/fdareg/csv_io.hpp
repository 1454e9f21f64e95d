#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdareg/grid.hpp"

namespace fdareg {

struct FunctionTable {
  TimeGrid grid;
  Eigen::MatrixXd values;            // p x N
  std::vector<std::string> names;    // N column names
};

// Functions-on-a-grid CSV: header "t,<name1>,...,<nameN>", one row per grid
// point.  Parse errors name the offending row and column.
FunctionTable load_functions_csv(const std::string& path);

// Writes with 17 significant digits so values round-trip bit-exactly.
void save_functions_csv(const std::string& path, const TimeGrid& grid,
                        const Eigen::MatrixXd& values,
                        const std::vector<std::string>& names = {});

// Generic numeric table with a leading label column (e.g. weights, groups).
void save_table_csv(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::string>& row_labels, const Eigen::MatrixXd& values);

std::string format_double(double v);

}  // namespace fdareg
