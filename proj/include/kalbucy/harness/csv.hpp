#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace kalbucy::harness {

// Shortest round-trip is not used: every value is printed with 17
// significant digits so files compare byte for byte.
std::string format_real(double value);

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  void add_metadata(const std::string& key, const std::string& value);
  void add_row(std::vector<std::string> cells);

  [[nodiscard]] const std::vector<std::string>& header() const { return header_; }
  [[nodiscard]] const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  [[nodiscard]] const std::vector<std::pair<std::string, std::string>>& metadata() const {
    return metadata_;
  }
  // Index of a header column; throws std::out_of_range when absent.
  [[nodiscard]] std::size_t column(const std::string& name) const;

  // "# key: value" lines, then the header, then rows; '\n' line endings.
  void write(std::ostream& out) const;
  [[nodiscard]] std::string str() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<std::pair<std::string, std::string>> metadata_;
};

void write_csv_file(const CsvTable& table, const std::string& path);

}  // namespace kalbucy::harness
