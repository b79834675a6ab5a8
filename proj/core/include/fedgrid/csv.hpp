#pragma once

#include <cstddef>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedgrid {

// Parse failure carrying the 1-based data location it refers to.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string message, std::size_t row, std::size_t column)
      : std::runtime_error(std::move(message)), row_(row), column_(column) {}

  std::size_t row() const { return row_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

// Shortest round-trip decimal text for a double ("51.48", not "51.479999...").
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // data rows, comment lines skipped

  std::size_t column_index(const std::string& name) const;  // throws if absent
};

// Reads a comma-separated file with one header row. Lines starting with '#'
// are treated as run-metadata comments and skipped.
CsvTable read_csv(const std::string& path);

double parse_double_cell(const CsvTable& table, std::size_t row, std::size_t col);

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);

  void comment(const std::string& text);                 // "# text" line
  void row(const std::vector<std::string>& cells);
  void numeric_row(const std::vector<double>& cells);

 private:
  std::ofstream out_;
};

}  // namespace fedgrid
