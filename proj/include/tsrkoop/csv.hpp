#pragma once

#include <string>
#include <vector>

namespace tsrkoop {

/// Comma-separated table with a header row. Comment lines ("# ...") come
/// first and carry provenance such as seeds and configuration; numbers are
/// written in shortest round-trip form so a re-read returns the same doubles.
struct CsvTable {
  std::vector<std::string> comments;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> cells);
  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& col) const;
  const std::string& text(std::size_t row, const std::string& col) const;
  bool operator==(const CsvTable&) const = default;
};

std::string cell(double v);
std::string cell(long long v);
inline std::string cell(int v) { return cell(static_cast<long long>(v)); }
inline std::string cell(std::size_t v) { return cell(static_cast<long long>(v)); }

void write_csv(const CsvTable& table, const std::string& path);
CsvTable read_csv(const std::string& path);

}  // namespace tsrkoop
