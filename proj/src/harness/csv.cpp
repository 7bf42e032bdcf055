#include "kalbucy/harness/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace kalbucy::harness {

std::string format_real(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto [ptr, ec] =
      std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::general, 17);
  if (ec != std::errc()) throw std::runtime_error("format_real: conversion failed");
  return std::string(buf.data(), ptr);
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {
  if (header_.empty()) throw std::invalid_argument("CsvTable: empty header");
}

void CsvTable::add_metadata(const std::string& key, const std::string& value) {
  if (key.find_first_of("\n:") != std::string::npos || value.find('\n') != std::string::npos) {
    throw std::invalid_argument("CsvTable: metadata must be single-line");
  }
  metadata_.emplace_back(key, value);
}

void CsvTable::add_row(std::vector<std::string> cells) {
  if (cells.size() != header_.size()) {
    throw std::invalid_argument("CsvTable: row has " + std::to_string(cells.size()) +
                                " cells, header has " + std::to_string(header_.size()));
  }
  for (const std::string& c : cells) {
    if (c.find_first_of(",\n\"") != std::string::npos) {
      throw std::invalid_argument("CsvTable: cell '" + c + "' needs quoting");
    }
  }
  rows_.push_back(std::move(cells));
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  throw std::out_of_range("CsvTable: no column '" + name + "'");
}

void CsvTable::write(std::ostream& out) const {
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) out << ',';
      out << cells[i];
    }
    out << '\n';
  };
  for (const auto& [k, v] : metadata_) out << "# " << k << ": " << v << '\n';
  line(header_);
  for (const auto& row : rows_) line(row);
}

std::string CsvTable::str() const {
  std::ostringstream out;
  write(out);
  return out.str();
}

void write_csv_file(const CsvTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  table.write(out);
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace kalbucy::harness
