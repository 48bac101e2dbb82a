#include "kernelforge/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "kernelforge/expression_io.hpp"

namespace kf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

bool parse_cell(const std::string& cell, double* out) {
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto res = std::from_chars(begin, end, *out);
  return res.ec == std::errc() && res.ptr == end && !cell.empty();
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file: " + path);

  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    rows.push_back(split_row(t));
  }
  if (rows.empty()) throw DataError(path + ": no rows");

  bool has_header = false;
  if (options.header == CsvHeader::Yes) {
    has_header = true;
  } else if (options.header == CsvHeader::Auto) {
    for (const auto& cell : rows.front()) {
      double v;
      if (!parse_cell(cell, &v)) has_header = true;
    }
  }
  std::vector<std::string> names;
  if (has_header) {
    names = rows.front();
    rows.erase(rows.begin());
    if (rows.empty()) throw DataError(path + ": no data rows below the header");
  } else {
    for (std::size_t c = 0; c < rows.front().size(); ++c) {
      names.push_back("c" + std::to_string(c + 1));
    }
  }
  const std::size_t cols = names.size();
  if (cols < 2) throw DataError(path + ": need at least two columns");

  // Resolve the target column: by name, then by 1-based index, else last.
  std::size_t target = cols - 1;
  if (!options.target.empty()) {
    bool found = false;
    for (std::size_t c = 0; c < cols; ++c) {
      if (names[c] == options.target) {
        target = c;
        found = true;
        break;
      }
    }
    if (!found) {
      int index = 0;
      const auto res = std::from_chars(
          options.target.data(), options.target.data() + options.target.size(),
          index);
      if (res.ec == std::errc() &&
          res.ptr == options.target.data() + options.target.size() &&
          index >= 1 && index <= static_cast<int>(cols)) {
        target = static_cast<std::size_t>(index - 1);
      } else {
        throw DataError(path + ": target column '" + options.target +
                        "' not found");
      }
    }
  }

  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd X(n, cols - 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = rows[r];
    // Rows reported in file terms (1-based, header included).
    const long file_row = r + 1 + (has_header ? 1 : 0);
    if (row.size() != cols) {
      throw DataError(path + ": row " + std::to_string(file_row) + " has " +
                      std::to_string(row.size()) + " cells, expected " +
                      std::to_string(cols));
    }
    Eigen::Index xc = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      double v;
      if (!parse_cell(row[c], &v) || !std::isfinite(v)) {
        throw DataError(path + ": non-numeric cell '" + row[c] + "' at row " +
                        std::to_string(file_row) + ", column '" + names[c] +
                        "'");
      }
      if (c == target) {
        y[r] = v;
      } else {
        X(r, xc++) = v;
      }
    }
  }
  return Dataset::from_raw(std::move(X), std::move(y), path);
}

void write_csv(const std::string& path,
               const std::vector<std::string>& column_names,
               const Eigen::MatrixXd& columns) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path);
  for (std::size_t c = 0; c < column_names.size(); ++c) {
    out << (c ? "," : "") << column_names[c];
  }
  out << "\n";
  for (Eigen::Index r = 0; r < columns.rows(); ++r) {
    for (Eigen::Index c = 0; c < columns.cols(); ++c) {
      out << (c ? "," : "") << format_double(columns(r, c));
    }
    out << "\n";
  }
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace kf
