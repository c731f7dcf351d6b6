#include "fusion/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

namespace fusion {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return s.substr(a, b - a);
}

// Comma separated fields; double quotes may wrap a field ("" escapes a quote).
std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool parse_number(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = b + s.size();
  if (*b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  return ec == std::errc() && ptr == e && std::isfinite(v);
}

}  // namespace

CsvDataset read_csv(std::istream& in, const DataMapping& mapping) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) {
      if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      header = split_fields(line);
      break;
    }
  }
  if (header.empty()) throw EmptyFile("no header row");

  auto find_col = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw MissingColumn("column '" + name + "' not found in header");
    return static_cast<int>(it - header.begin());
  };
  CsvDataset out;
  out.source_column = mapping.source;
  const int scol = find_col(mapping.source);
  std::vector<int> zcols;
  if (mapping.columns.empty()) {
    for (int c = 0; c < static_cast<int>(header.size()); ++c)
      if (c != scol) {
        zcols.push_back(c);
        out.columns.push_back(header[c]);
      }
  } else {
    for (const auto& name : mapping.columns) zcols.push_back(find_col(name));
    out.columns = mapping.columns;
  }
  if (zcols.empty()) throw MissingColumn("no data columns besides the source column");

  const int d = static_cast<int>(zcols.size());
  std::vector<double> values;
  std::vector<std::string> labels;
  long row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    std::vector<std::string> f = split_fields(line);
    if (f.size() != header.size())
      throw NonNumericCell("row " + std::to_string(row) + " has " + std::to_string(f.size()) + " fields, header has " +
                           std::to_string(header.size()));
    for (int c = 0; c < d; ++c) {
      double v;
      if (!parse_number(f[zcols[c]], v))
        throw NonNumericCell("row " + std::to_string(row) + ", column '" + header[zcols[c]] + "': '" + f[zcols[c]] +
                             "' is not a number");
      values.push_back(v);
    }
    if (f[scol].empty()) throw NonNumericCell("row " + std::to_string(row) + ": empty source label");
    labels.push_back(f[scol]);
  }
  if (row == 0) throw EmptyFile("no data rows");

  std::map<std::string, int> code;
  if (!mapping.source_labels.empty()) {
    out.source_labels = mapping.source_labels;
  } else {
    std::vector<std::string> distinct(labels.begin(), labels.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    bool numeric = std::all_of(distinct.begin(), distinct.end(), [](const std::string& s) {
      double v;
      return parse_number(s, v);
    });
    if (numeric)
      std::stable_sort(distinct.begin(), distinct.end(), [](const std::string& a, const std::string& b) {
        double x, y;
        parse_number(a, x);
        parse_number(b, y);
        return x < y;
      });
    out.source_labels = distinct;
  }
  for (size_t i = 0; i < out.source_labels.size(); ++i)
    if (!code.emplace(out.source_labels[i], static_cast<int>(i) + 1).second)
      throw ParseError("duplicate source label '" + out.source_labels[i] + "'");

  RowMatrix z(row, d);
  std::vector<int> s(row);
  for (long i = 0; i < row; ++i) {
    for (int c = 0; c < d; ++c) z(i, c) = values[i * d + c];
    auto it = code.find(labels[i]);
    if (it == code.end())
      throw KeyError("row " + std::to_string(i + 1) + ": source label '" + labels[i] + "' is not in the label map");
    s[i] = it->second;
  }
  out.data = Dataset(std::move(z), std::move(s), static_cast<int>(out.source_labels.size()));
  return out;
}

CsvDataset ingest_csv(const std::string& path, const DataMapping& mapping) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EmptyFile("cannot open data file '" + path + "'");
  return read_csv(in, mapping);
}

void write_csv(std::ostream& out, const CsvDataset& csv) {
  for (const auto& c : csv.columns) out << c << ',';
  out << csv.source_column << '\n';
  char buf[64];
  for (int i = 0; i < csv.data.n(); ++i) {
    for (int c = 0; c < csv.data.d(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", csv.data.z(i, c));
      out << buf << ',';
    }
    out << csv.source_labels[csv.data.s(i) - 1] << '\n';
  }
}

}  // namespace fusion
