#include "csv.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "config.hpp"
#include "error.hpp"

namespace gwpoct::csv {

namespace {

std::string escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

// Splits one record, honoring quoted fields.
std::vector<std::string> split_record(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch == '\r') {
      // tolerate CRLF
    } else {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

void Writer::add_row(const std::vector<double>& values) {
  std::vector<std::string> fields;
  fields.reserve(values.size());
  for (double v : values) fields.push_back(format_double(v));
  add_row_text(fields);
}

void Writer::add_row_text(const std::vector<std::string>& fields) {
  require(fields.size() == header_.size(), Errc::invalid_argument,
          "csv row width does not match header");
  rows_.push_back(fields);
}

std::string Writer::serialize() const {
  std::string out;
  for (size_t i = 0; i < header_.size(); ++i) {
    if (i) out += ',';
    out += escape(header_[i]);
  }
  out += '\n';
  for (const auto& row : rows_) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += escape(row[i]);
    }
    out += '\n';
  }
  return out;
}

void Writer::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io, "cannot write '" + path + "'");
  out << serialize();
  require(out.good(), Errc::io, "write failed for '" + path + "'");
}

Table Table::load(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "cannot open '" + path + "'");
  Table t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    auto fields = split_record(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
    } else {
      require(fields.size() == t.header.size(), Errc::parse,
              path + ": ragged csv row (" + std::to_string(fields.size()) + " fields, expected " +
                  std::to_string(t.header.size()) + ")");
      t.rows.push_back(std::move(fields));
    }
  }
  require(!t.header.empty(), Errc::parse, path + ": empty csv");
  return t;
}

int Table::column_index(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

std::vector<double> Table::column(const std::string& name) const {
  const int idx = column_index(name);
  require(idx >= 0, Errc::parse, "csv column '" + name + "' not found");
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.push_back(std::strtod(row[idx].c_str(), nullptr));
  return out;
}

double Table::cell(size_t row, const std::string& name) const {
  return std::strtod(cell_text(row, name).c_str(), nullptr);
}

std::string Table::cell_text(size_t row, const std::string& name) const {
  const int idx = column_index(name);
  require(idx >= 0, Errc::parse, "csv column '" + name + "' not found");
  require(row < rows.size(), Errc::invalid_argument, "csv row out of range");
  return rows[row][idx];
}

}  // namespace gwpoct::csv
