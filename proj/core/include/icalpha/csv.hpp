#pragma once

#include <string>
#include <vector>

namespace icalpha {

/// In-memory CSV: header row plus string cells. Values stay raw; typed
/// access and missing-cell interpretation happen at the point of use so
/// error messages can carry file and line context.
struct Csv {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;  // 1-based file line per data row

  /// Column index by name, -1 if absent.
  int column(const std::string& name) const;
};

Csv read_csv(const std::string& path);
Csv read_csv_text(const std::string& text, const std::string& name);
void write_csv(const Csv& csv, const std::string& path);

/// Empty string and "NA" encode a missing covariate cell.
bool is_missing_cell(const std::string& cell);

/// Round-trip formatting for doubles (17 significant digits).
std::string format_double(double value);

/// Parse a numeric cell; `context` names the file/line/column on error.
double parse_double_cell(const std::string& cell, const std::string& context);

}  // namespace icalpha
