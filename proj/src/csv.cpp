#include "bnlab/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "bnlab/errors.hpp"

namespace bnlab {

std::string fmt_g6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void CsvTable::add_row(std::vector<std::string> cells) {
  if (cells.size() != header_.size())
    throw Error("csv row has " + std::to_string(cells.size()) + " cells, header has " +
                std::to_string(header_.size()));
  rows_.push_back(std::move(cells));
}

std::string CsvTable::to_string() const {
  std::ostringstream os;
  for (size_t i = 0; i < header_.size(); ++i) {
    if (i) os << ",";
    os << header_[i];
  }
  os << "\n";
  for (const auto& row : rows_) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) os << ",";
      os << row[i];
    }
    os << "\n";
  }
  return os.str();
}

std::string CsvTable::to_structured_text() const {
  std::ostringstream os;
  for (const auto& row : rows_) {
    for (size_t i = 0; i < row.size(); ++i) os << header_[i] << ": " << row[i] << "\n";
    os << "\n";
  }
  return os.str();
}

void CsvTable::write(const std::string& path) const { write_file_atomic(path, to_string()); }

void export_report(const CsvTable& table, const std::string& path, ReportFormat format) {
  write_file_atomic(path,
                    format == ReportFormat::csv ? table.to_string() : table.to_structured_text());
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write file: " + tmp);
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) throw IoError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot move file into place: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open file: " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace bnlab
