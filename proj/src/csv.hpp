#pragma once

#include <string>
#include <vector>

namespace gwpoct::csv {

/// Minimal RFC-4180-style writer: header + numeric rows, quoting only when a
/// field contains a separator, quote, or newline.
class Writer {
 public:
  explicit Writer(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(const std::vector<double>& values);
  void add_row_text(const std::vector<std::string>& fields);
  std::string serialize() const;
  void save(const std::string& path) const;
  size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// In-memory CSV table for reading results back (solution replays, scans).
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  static Table load(const std::string& path);
  int column_index(const std::string& name) const;  // -1 when absent
  bool has_column(const std::string& name) const { return column_index(name) >= 0; }
  std::vector<double> column(const std::string& name) const;
  double cell(size_t row, const std::string& name) const;
  std::string cell_text(size_t row, const std::string& name) const;
};

}  // namespace gwpoct::csv
