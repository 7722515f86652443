#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace edgewise {

// Discrete observation matrix: m samples over n variables, category codes in
// [0, arity[v]). Stored column-major so per-family counting walks one column
// at a time. No missing values.
struct DataMatrix {
  int m = 0;
  int n = 0;
  std::vector<int> arity;                  // per variable, >= 2 expected
  std::vector<std::string> names;          // column names (may be synthetic)
  std::vector<std::vector<std::uint8_t>> columns;  // [n][m]

  std::uint8_t cell(int sample, int var) const { return columns[var][sample]; }
};

struct CsvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}
}  // namespace detail

// Comma-separated, UTF-8, one header row of variable names. Labels (string or
// integer alike) are dictionary-encoded per column in first-appearance order;
// arity is the number of distinct labels observed.
inline DataMatrix load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open file: " + path);

  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) {
    if (!line.empty() && line.find_first_not_of(" \t\r") == std::string::npos) continue;
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw CsvError("empty file: " + path);

  DataMatrix data;
  data.names = detail::split_csv_line(lines[0]);
  data.n = static_cast<int>(data.names.size());
  data.m = static_cast<int>(lines.size()) - 1;
  if (data.m <= 0) throw CsvError("empty file: no data rows in " + path);

  std::vector<std::vector<std::string>> dict(data.n);
  data.columns.assign(data.n, {});
  for (auto& col : data.columns) col.reserve(data.m);

  for (int t = 0; t < data.m; ++t) {
    auto fields = detail::split_csv_line(lines[t + 1]);
    if (static_cast<int>(fields.size()) != data.n) {
      throw CsvError("row width mismatch at line " + std::to_string(t + 2) + ": expected " +
                     std::to_string(data.n) + " fields, got " + std::to_string(fields.size()));
    }
    for (int v = 0; v < data.n; ++v) {
      auto& d = dict[v];
      std::size_t code = 0;
      for (; code < d.size(); ++code)
        if (d[code] == fields[v]) break;
      if (code == d.size()) {
        if (d.size() >= 255) throw CsvError("column '" + data.names[v] + "' exceeds 255 categories");
        d.push_back(fields[v]);
      }
      data.columns[v].push_back(static_cast<std::uint8_t>(code));
    }
  }

  data.arity.resize(data.n);
  for (int v = 0; v < data.n; ++v) {
    data.arity[v] = static_cast<int>(dict[v].size());
    if (data.arity[v] < 2)
      throw CsvError("constant column '" + data.names[v] + "': arity < 2");
  }
  return data;
}

}  // namespace edgewise
