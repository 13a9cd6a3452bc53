#ifndef MSCATTER_IO_HPP
#define MSCATTER_IO_HPP

#include <string>
#include <vector>

#include "mscatter/data.hpp"
#include "mscatter/linalg.hpp"

namespace mscatter {

// 17 significant digits, enough to round-trip any double exactly
std::string format_double(double x);

// write-to-temp-then-rename in the target directory, so readers never see a
// partially written file
void atomic_write_text(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// Minimal CSV: comma separated, one header line, no quoting or escapes.
struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Csv read_csv(const std::string& path);
void write_csv(const std::string& path, const Csv& table);

// Feature columns plus a "group" column mapping rows to classes.  Class
// labels keep their order of first appearance.
struct GroupedCsv {
  std::vector<std::string> feature_names;
  std::vector<std::string> class_labels;
  std::vector<std::vector<Vector>> groups;
};

GroupedCsv parse_grouped(const Csv& table);

// Feature-only view (an optional "group" column is ignored)
std::vector<Vector> parse_features(const Csv& table, std::vector<std::string>* feature_names);

void write_matrix_csv(const std::string& path, const Matrix& m);
Matrix read_matrix_csv(const std::string& path);

}  // namespace mscatter

#endif
