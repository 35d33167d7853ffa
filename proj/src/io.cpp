#include "jtln/io.hpp"

#include "jtln/cost_metrics.hpp"

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace jtln {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string::size_type begin = 0;
  while (true) {
    const auto end = line.find(sep, begin);
    parts.push_back(line.substr(begin, end == std::string::npos ? end : end - begin));
    if (end == std::string::npos) break;
    begin = end + 1;
  }
  return parts;
}

double parse_double(const std::string& token, long line) {
  char* end = nullptr;
  errno = 0;
  const double value = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0' || errno == ERANGE)
    throw ParseError("cannot parse '" + token + "' as a number", line);
  return value;
}

long parse_long(const std::string& token, long line) {
  char* end = nullptr;
  const long value = std::strtol(token.c_str(), &end, 10);
  if (end == token.c_str() || *end != '\0')
    throw ParseError("cannot parse '" + token + "' as an integer", line);
  return value;
}

// header lines are comma-separated key=value pairs
std::map<std::string, std::string> parse_header(const std::string& line, long line_no) {
  std::map<std::string, std::string> fields;
  for (const auto& part : split(line, ',')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value, got '" + part + "'", line_no);
    fields[part.substr(0, eq)] = part.substr(eq + 1);
  }
  return fields;
}

const std::string& require_field(const std::map<std::string, std::string>& fields,
                                 const std::string& key) {
  const auto it = fields.find(key);
  if (it == fields.end()) throw SchemaError("missing header field '" + key + "'");
  return it->second;
}

void atomic_write(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    out << contents;
    if (!out.flush()) throw std::runtime_error("write to '" + tmp + "' failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw std::runtime_error("cannot rename '" + tmp + "' to '" + path + "': " +
                             std::strerror(errno));
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<int> parse_label_list(const std::string& value, long line) {
  std::vector<int> ids;
  for (const auto& token : split(value, ','))
    ids.push_back(static_cast<int>(parse_long(token, line)));
  return ids;
}

std::string join_labels(const std::vector<int>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(ids[i]);
  }
  return out;
}

}  // namespace

std::string format_double(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

std::string format_significant(double value, int digits) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.*g", digits, value);
  return buffer;
}

void save_labeled_set(const LabeledSet& set, const std::string& path) {
  set.validate();
  std::string out = "feature_dim=" + std::to_string(set.features.cols()) +
                    ",label_count=" + std::to_string(set.label_count) + "\n";
  for (Eigen::Index r = 0; r < set.features.rows(); ++r) {
    out += std::to_string(set.labels[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < set.features.cols(); ++c) {
      out += ',';
      out += format_double(set.features(r, c));
    }
    out += '\n';
  }
  atomic_write(path, out);
}

LabeledSet load_labeled_set(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ParseError("empty labeled-set file '" + path + "'", 1);

  const auto header = parse_header(lines[0], 1);
  const long dim = parse_long(require_field(header, "feature_dim"), 1);
  const long label_count = parse_long(require_field(header, "label_count"), 1);
  if (dim < 1 || label_count < 1) throw SchemaError("feature_dim and label_count must be positive");

  LabeledSet set;
  set.label_count = static_cast<int>(label_count);
  std::vector<std::string> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (!lines[i].empty()) rows.push_back(lines[i]);
  }
  if (rows.empty()) throw ParseError("labeled-set file has no sample rows", 2);

  set.features.resize(static_cast<Eigen::Index>(rows.size()), dim);
  set.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const long line_no = static_cast<long>(i) + 2;
    const auto parts = split(rows[i], ',');
    if (static_cast<long>(parts.size()) != dim + 1)
      throw SchemaError("row at line " + std::to_string(line_no) + " has " +
                        std::to_string(parts.size() - 1) + " features, expected feature_dim=" +
                        std::to_string(dim));
    const long label = parse_long(parts[0], line_no);
    if (label < 1 || label > label_count)
      throw SchemaError("label " + std::to_string(label) + " at line " + std::to_string(line_no) +
                        " outside [1, " + std::to_string(label_count) + "]");
    set.labels.push_back(static_cast<int>(label));
    for (long c = 0; c < dim; ++c)
      set.features(static_cast<Eigen::Index>(i), c) =
          parse_double(parts[static_cast<std::size_t>(c + 1)], line_no);
  }
  set.validate();
  return set;
}

void save_cost_matrix(const CostMatrixFile& file, const std::string& path) {
  file.matrix.validate();
  std::string out = "rows=" + std::to_string(file.matrix.rows()) +
                    ",cols=" + std::to_string(file.matrix.cols()) +
                    ",normalized=" + (file.normalized ? "true" : "false") + "\n";
  for (Eigen::Index r = 0; r < file.matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < file.matrix.cols(); ++c) {
      if (c) out += ',';
      out += format_double(file.matrix.entries(r, c));
    }
    out += '\n';
  }
  if (!file.matrix.row_labels.empty())
    out += "# row_labels=" + join_labels(file.matrix.row_labels) + "\n";
  if (!file.matrix.col_labels.empty())
    out += "# col_labels=" + join_labels(file.matrix.col_labels) + "\n";
  for (const auto& [key, value] : file.metadata) out += "# " + key + "=" + value + "\n";
  atomic_write(path, out);
}

CostMatrixFile load_cost_matrix(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ParseError("empty cost-matrix file '" + path + "'", 1);

  const auto header = parse_header(lines[0], 1);
  const long rows = parse_long(require_field(header, "rows"), 1);
  const long cols = parse_long(require_field(header, "cols"), 1);
  const std::string& normalized = require_field(header, "normalized");
  if (normalized != "true" && normalized != "false")
    throw SchemaError("normalized must be 'true' or 'false'");
  if (rows < 1 || cols < 1) throw SchemaError("rows and cols must be positive");
  if (static_cast<long>(lines.size()) < rows + 1)
    throw ParseError("expected " + std::to_string(rows) + " matrix rows", static_cast<long>(lines.size()));

  CostMatrixFile file;
  file.normalized = normalized == "true";
  file.matrix.entries.resize(rows, cols);
  for (long r = 0; r < rows; ++r) {
    const long line_no = r + 2;
    const auto parts = split(lines[static_cast<std::size_t>(r + 1)], ',');
    if (static_cast<long>(parts.size()) != cols)
      throw SchemaError("matrix row at line " + std::to_string(line_no) + " has " +
                        std::to_string(parts.size()) + " entries, expected cols=" +
                        std::to_string(cols));
    for (long c = 0; c < cols; ++c)
      file.matrix.entries(r, c) = parse_double(parts[static_cast<std::size_t>(c)], line_no);
  }
  for (std::size_t i = static_cast<std::size_t>(rows) + 1; i < lines.size(); ++i) {
    const long line_no = static_cast<long>(i) + 1;
    std::string line = lines[i];
    if (line.empty()) continue;
    if (line[0] != '#') throw ParseError("unexpected content after the matrix block", line_no);
    line = line.substr(line.find_first_not_of("# \t", 0));
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;  // free-form comment
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "row_labels") {
      file.matrix.row_labels = parse_label_list(value, line_no);
    } else if (key == "col_labels") {
      file.matrix.col_labels = parse_label_list(value, line_no);
    } else {
      file.metadata[key] = value;
    }
  }
  file.matrix.validate();
  return file;
}

void save_histogram(const Histogram& histogram, const std::string& path) {
  histogram.validate();
  std::string out;
  if (!histogram.label_ids.empty()) out += "# labels=" + join_labels(histogram.label_ids) + "\n";
  for (Eigen::Index i = 0; i < histogram.size(); ++i) {
    if (i) out += ',';
    out += format_double(histogram.weights[i]);
  }
  out += '\n';
  atomic_write(path, out);
}

Histogram load_histogram(const std::string& path) {
  const auto lines = read_lines(path);
  Histogram histogram;
  long data_line = -1;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    if (lines[i][0] == '#') {
      const auto eq = lines[i].find('=');
      if (eq != std::string::npos &&
          lines[i].substr(lines[i].find_first_not_of("# \t"), eq - lines[i].find_first_not_of("# \t")) ==
              "labels")
        histogram.label_ids = parse_label_list(lines[i].substr(eq + 1), static_cast<long>(i) + 1);
      continue;
    }
    data_line = static_cast<long>(i) + 1;
    const auto parts = split(lines[i], ',');
    histogram.weights.resize(static_cast<Eigen::Index>(parts.size()));
    for (std::size_t p = 0; p < parts.size(); ++p)
      histogram.weights[static_cast<Eigen::Index>(p)] = parse_double(parts[p], data_line);
    break;
  }
  if (data_line < 0) throw ParseError("histogram file '" + path + "' has no data line", 1);
  histogram.validate();
  return histogram;
}

void save_plan(const TransportPlan& plan, const std::string& path) {
  CostMatrixFile file;
  file.matrix.entries = plan.coupling;
  file.normalized = false;
  save_cost_matrix(file, path);
}

CategoryBank bank_from_labeled_set(const LabeledSet& set) {
  set.validate();
  CategoryBank bank;
  bank.feature_dim = set.features.cols();
  std::map<int, std::vector<Eigen::Index>> rows_by_label;
  for (Eigen::Index r = 0; r < set.size(); ++r)
    rows_by_label[set.labels[static_cast<std::size_t>(r)]].push_back(r);
  for (const auto& [label, rows] : rows_by_label) {
    Matrix points(static_cast<Eigen::Index>(rows.size()), set.features.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
      points.row(static_cast<Eigen::Index>(i)) = set.features.row(rows[i]);
    bank.categories.emplace(label, EmpiricalMeasure::from_points(std::move(points)));
  }
  return bank;
}

}  // namespace jtln
