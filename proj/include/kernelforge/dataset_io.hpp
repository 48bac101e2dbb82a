#pragma once

#include <optional>
#include <string>

#include "kernelforge/gp.hpp"

namespace kf {

enum class CsvHeader { Auto, Yes, No };

struct CsvOptions {
  // Column name (needs a header) or 1-based index given as digits; the last
  // column when empty.
  std::string target;
  CsvHeader header = CsvHeader::Auto;
};

// Loads a numeric CSV: non-target columns become X in file order, the target
// column becomes y. Throws DataError naming the offending row and column for
// non-numeric cells, and for missing files, empty tables or unknown targets.
Dataset load_csv(const std::string& path, const CsvOptions& options = {});

// Two-column convenience writer (plus optional header), 17 significant digits.
void write_csv(const std::string& path,
               const std::vector<std::string>& column_names,
               const Eigen::MatrixXd& columns);

}  // namespace kf
