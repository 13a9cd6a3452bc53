#include "mscatter/io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mscatter {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void atomic_write_text(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("atomic_write_text: cannot open " + tmp);
    out << content;
    if (!out.flush()) throw std::runtime_error("atomic_write_text: write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("atomic_write_text: rename to " + path + " failed: " +
                                   ec.message());
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_text_file: cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_number(const std::string& cell, const std::string& context) {
  if (cell.empty())
    throw std::invalid_argument("csv: missing value in " + context);
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("csv: '" + cell + "' is not a number in " + context);
  }
  if (pos != cell.size())
    throw std::invalid_argument("csv: '" + cell + "' is not a number in " + context);
  return v;
}

}  // namespace

Csv read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path);
  Csv table;
  std::string line;
  bool have_header = false;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    auto cells = split_line(t);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size()) {
      std::ostringstream os;
      os << "read_csv: line " << lineno << " of " << path << " has " << cells.size()
         << " fields, header has " << table.header.size();
      throw std::invalid_argument(os.str());
    }
    table.rows.push_back(std::move(cells));
  }
  if (!have_header) throw std::invalid_argument("read_csv: " + path + " is empty");
  return table;
}

void write_csv(const std::string& path, const Csv& table) {
  std::ostringstream os;
  for (size_t j = 0; j < table.header.size(); ++j)
    os << (j ? "," : "") << table.header[j];
  os << '\n';
  for (const auto& row : table.rows) {
    for (size_t j = 0; j < row.size(); ++j) os << (j ? "," : "") << row[j];
    os << '\n';
  }
  atomic_write_text(path, os.str());
}

GroupedCsv parse_grouped(const Csv& table) {
  int group_col = -1;
  for (size_t j = 0; j < table.header.size(); ++j)
    if (table.header[j] == "group") group_col = static_cast<int>(j);
  if (group_col < 0) throw std::invalid_argument("csv: no 'group' column");
  if (table.header.size() < 2) throw std::invalid_argument("csv: no feature columns");
  if (table.rows.empty()) throw std::invalid_argument("csv: no data rows");

  GroupedCsv out;
  for (size_t j = 0; j < table.header.size(); ++j)
    if (static_cast<int>(j) != group_col) out.feature_names.push_back(table.header[j]);

  const int p = static_cast<int>(out.feature_names.size());
  for (size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string& label = row[static_cast<size_t>(group_col)];
    if (label.empty()) {
      std::ostringstream os;
      os << "row " << r + 1;
      throw std::invalid_argument("csv: missing group label in " + os.str());
    }
    size_t k = 0;
    for (; k < out.class_labels.size(); ++k)
      if (out.class_labels[k] == label) break;
    if (k == out.class_labels.size()) {
      out.class_labels.push_back(label);
      out.groups.emplace_back();
    }
    Vector x(p);
    int jj = 0;
    for (size_t j = 0; j < row.size(); ++j) {
      if (static_cast<int>(j) == group_col) continue;
      std::ostringstream ctx;
      ctx << "row " << r + 1 << ", column '" << table.header[j] << "'";
      x[jj++] = parse_number(row[j], ctx.str());
    }
    out.groups[k].push_back(std::move(x));
  }
  return out;
}

std::vector<Vector> parse_features(const Csv& table, std::vector<std::string>* feature_names) {
  int group_col = -1;
  for (size_t j = 0; j < table.header.size(); ++j)
    if (table.header[j] == "group") group_col = static_cast<int>(j);
  std::vector<std::string> names;
  for (size_t j = 0; j < table.header.size(); ++j)
    if (static_cast<int>(j) != group_col) names.push_back(table.header[j]);
  if (names.empty()) throw std::invalid_argument("csv: no feature columns");
  std::vector<Vector> out;
  const int p = static_cast<int>(names.size());
  for (size_t r = 0; r < table.rows.size(); ++r) {
    Vector x(p);
    int jj = 0;
    for (size_t j = 0; j < table.rows[r].size(); ++j) {
      if (static_cast<int>(j) == group_col) continue;
      std::ostringstream ctx;
      ctx << "row " << r + 1 << ", column '" << table.header[j] << "'";
      x[jj++] = parse_number(table.rows[r][j], ctx.str());
    }
    out.push_back(std::move(x));
  }
  if (feature_names) *feature_names = std::move(names);
  return out;
}

void write_matrix_csv(const std::string& path, const Matrix& m) {
  Csv table;
  for (int j = 0; j < m.cols(); ++j) {
    std::ostringstream os;
    os << 'c' << j;
    table.header.push_back(os.str());
  }
  for (int i = 0; i < m.rows(); ++i) {
    std::vector<std::string> row;
    row.reserve(static_cast<size_t>(m.cols()));
    for (int j = 0; j < m.cols(); ++j) row.push_back(format_double(m(i, j)));
    table.rows.push_back(std::move(row));
  }
  write_csv(path, table);
}

Matrix read_matrix_csv(const std::string& path) {
  const Csv table = read_csv(path);
  const int cols = static_cast<int>(table.header.size());
  const int rows = static_cast<int>(table.rows.size());
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      std::ostringstream ctx;
      ctx << "row " << i + 1 << ", column " << j + 1;
      m(i, j) = parse_number(table.rows[static_cast<size_t>(i)][static_cast<size_t>(j)],
                             ctx.str());
    }
  return m;
}

}  // namespace mscatter
