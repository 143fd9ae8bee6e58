#include "tsrkoop/csv.hpp"

#include <fstream>
#include <sstream>

#include "tsrkoop/binary_io.hpp"
#include "tsrkoop/errors.hpp"

namespace tsrkoop {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void CsvTable::add_row(std::vector<std::string> cells) {
  if (cells.size() != columns.size()) {
    throw FormatError("harness", "CSV row has " + std::to_string(cells.size()) +
                                     " cells, expected " + std::to_string(columns.size()));
  }
  rows.push_back(std::move(cells));
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  throw FormatError("harness", "CSV has no column '" + name + "'");
}

double CsvTable::number(std::size_t row, const std::string& col) const {
  return io::parse_double(rows.at(row).at(column(col)), "CSV column " + col);
}

const std::string& CsvTable::text(std::size_t row, const std::string& col) const {
  return rows.at(row).at(column(col));
}

std::string cell(double v) { return io::format_exact(v); }
std::string cell(long long v) { return std::to_string(v); }

void write_csv(const CsvTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("harness", "cannot open '" + path + "' for writing");
  for (const auto& c : table.comments) out << "# " << c << '\n';
  auto emit = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].find_first_of(",\n") != std::string::npos) {
        throw FormatError("harness", "CSV cell '" + cells[i] + "' contains a separator");
      }
      out << (i ? "," : "") << cells[i];
    }
    out << '\n';
  };
  emit(table.columns);
  for (const auto& r : table.rows) emit(r);
  if (!out) throw IoError("harness", "write to '" + path + "' failed");
}

CsvTable read_csv(const std::string& path) {
  const auto bytes = io::read_file(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  CsvTable t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!have_header && line.rfind("# ", 0) == 0) {
      t.comments.push_back(line.substr(2));
      continue;
    }
    if (!have_header) {
      t.columns = split(line);
      have_header = true;
    } else {
      t.add_row(split(line));
    }
  }
  if (!have_header) throw FormatError("harness", "'" + path + "' has no CSV header");
  return t;
}

}  // namespace tsrkoop
