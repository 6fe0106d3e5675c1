#pragma once

#include <string>
#include <vector>

namespace bnlab {

// Numbers print with 6 significant digits; exports are deterministic byte
// streams with fixed field ordering.
std::string fmt_g6(double v);

enum class ReportFormat { csv, structured_text };

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<std::string> cells);
  size_t rows() const { return rows_.size(); }
  std::string to_string() const;
  // One "field: value" line per cell, blank line between records.
  std::string to_structured_text() const;
  void write(const std::string& path) const;  // atomic: temp + rename

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

void export_report(const CsvTable& table, const std::string& path, ReportFormat format);

void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace bnlab
