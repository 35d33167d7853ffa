#pragma once

#include "jtln/core_types.hpp"
#include "jtln/cost_metrics.hpp"
#include "jtln/network.hpp"

#include <map>
#include <string>

namespace jtln {

// Plain-text formats, UTF-8, LF line endings, doubles printed with 17
// significant digits so save/load round-trips are value-exact. All writers go
// through a temp file + rename.
//
// Labeled set:
//   feature_dim=<d>,label_count=<L>
//   <label>,<v1>,...,<vd>          (one row per sample)
//
// Cost matrix:
//   rows=<L_s>,cols=<L_t>,normalized=<true|false>
//   <c11>,...,<c1Lt>               (L_s rows)
//   # row_labels=<id,...>          (comment lines; further '# key=value'
//   # col_labels=<id,...>           lines carry optional metadata)
//
// Histogram: a single line of comma-separated weights, optionally preceded
// by '# labels=<id,...>'.

void save_labeled_set(const LabeledSet& set, const std::string& path);
LabeledSet load_labeled_set(const std::string& path);

struct CostMatrixFile {
  CostMatrix matrix;
  bool normalized = false;
  std::map<std::string, std::string> metadata;  // extra '# key=value' entries
};

void save_cost_matrix(const CostMatrixFile& file, const std::string& path);
CostMatrixFile load_cost_matrix(const std::string& path);

void save_histogram(const Histogram& histogram, const std::string& path);
Histogram load_histogram(const std::string& path);

// Coupling matrices reuse the cost-matrix layout (normalized=false).
void save_plan(const TransportPlan& plan, const std::string& path);

// Groups a labeled set's rows into per-label point clouds with uniform weights.
CategoryBank bank_from_labeled_set(const LabeledSet& set);

std::string format_double(double value);  // %.17g
std::string format_significant(double value, int digits);

}  // namespace jtln
