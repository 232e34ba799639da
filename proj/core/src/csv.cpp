#include "icalpha/csv.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "icalpha/errors.hpp"

namespace icalpha {

namespace {

std::vector<std::string> split_line(const std::string& line, const std::string& context) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  if (quoted) throw InputError(context + ": unterminated quote");
  out.push_back(field);
  return out;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

Csv parse_stream(std::istream& in, const std::string& name) {
  Csv csv;
  csv.path = name;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      csv.header = split_line(line, name + ":" + std::to_string(line_no));
      for (auto& h : csv.header) h = trim(h);
      if (csv.header.empty() || (csv.header.size() == 1 && csv.header[0].empty()))
        throw InputError(name + ": missing header row");
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    auto fields = split_line(line, name + ":" + std::to_string(line_no));
    for (auto& f : fields) f = trim(f);
    if (fields.size() != csv.header.size())
      throw InputError(name + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(csv.header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    csv.rows.push_back(std::move(fields));
    csv.line_numbers.push_back(line_no);
  }
  if (!have_header) throw InputError(name + ": empty file");
  return csv;
}

}  // namespace

int Csv::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

Csv read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path);
  return parse_stream(in, path);
}

Csv read_csv_text(const std::string& text, const std::string& name) {
  std::istringstream in(text);
  return parse_stream(in, name);
}

void write_csv(const Csv& csv, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open file for writing: " + path);
  auto write_row = [&out](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out << ',';
      const std::string& f = fields[i];
      if (f.find_first_of(",\"\n") != std::string::npos) {
        out << '"';
        for (char c : f) {
          if (c == '"') out << "\"\"";
          else out << c;
        }
        out << '"';
      } else {
        out << f;
      }
    }
    out << '\n';
  };
  write_row(csv.header);
  for (const auto& row : csv.rows) write_row(row);
  if (!out) throw InputError("write failed: " + path);
}

bool is_missing_cell(const std::string& cell) { return cell.empty() || cell == "NA"; }

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

double parse_double_cell(const std::string& cell, const std::string& context) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || errno == ERANGE)
    throw InputError(context + ": not a number: '" + cell + "'");
  return v;
}

}  // namespace icalpha
