#include <doctest.h>

#include "jtln/cost_metrics.hpp"
#include "jtln/dataset.hpp"
#include "jtln/io.hpp"
#include "oracles.hpp"

#include <filesystem>
#include <fstream>

using namespace jtln;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "jtln_data_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.feature_dim = 4;
  spec.target_categories = 3;
  spec.source_categories = 5;
  spec.samples_per_target_train = 6;
  spec.samples_per_target_test = 7;
  spec.samples_per_source = 8;
  spec.relatedness = 0.6;
  spec.noise_sigma = 1.0;
  spec.seed = 11;
  return spec;
}

}  // namespace

TEST_SUITE_BEGIN("data");

TEST_CASE("generation is deterministic and produces the requested counts") {
  const SyntheticSpec spec = small_spec();
  const auto a = generate(spec);
  const auto b = generate(spec);

  CHECK(a.target_train.size() == 3 * 6);
  CHECK(a.target_test.size() == 3 * 7);
  CHECK(a.source.size() == 5 * 8);
  CHECK(a.target_train.label_count == 3);
  CHECK(a.source.label_count == 5);

  CHECK((a.target_train.features.array() == b.target_train.features.array()).all());
  CHECK((a.target_test.features.array() == b.target_test.features.array()).all());
  CHECK((a.source.features.array() == b.source.features.array()).all());
  CHECK(a.target_train.labels == b.target_train.labels);
  CHECK(a.source_match == b.source_match);

  // train and test draws never coincide
  for (Eigen::Index i = 0; i < a.target_train.size(); ++i)
    for (Eigen::Index j = 0; j < a.target_test.size(); ++j)
      CHECK((a.target_train.features.row(i) - a.target_test.features.row(j)).norm() > 0.0);

  SyntheticSpec other = spec;
  other.seed = 12;
  const auto c = generate(other);
  CHECK((a.source.features.array() != c.source.features.array()).any());
}

TEST_CASE("zero relatedness keeps every source mean far from every target mean") {
  SyntheticSpec spec = small_spec();
  spec.relatedness = 0.0;
  const auto data = generate(spec);
  for (Eigen::Index s = 0; s < data.source_means.rows(); ++s) {
    CHECK(data.source_match[static_cast<std::size_t>(s)] == -1);
    for (Eigen::Index t = 0; t < data.target_means.rows(); ++t) {
      CHECK((data.source_means.row(s) - data.target_means.row(t)).norm() >=
            10.0 * spec.noise_sigma);
    }
  }
}

TEST_CASE("full relatedness puts each source mean within noise range of its target") {
  SyntheticSpec spec = small_spec();
  spec.relatedness = 1.0;
  const auto data = generate(spec);
  for (Eigen::Index s = 0; s < data.source_means.rows(); ++s) {
    const int match = data.source_match[static_cast<std::size_t>(s)];
    REQUIRE(match >= 0);
    CHECK((data.source_means.row(s) - data.target_means.row(match)).norm() <= spec.noise_sigma);
  }
}

TEST_CASE("matched categories dominate the transport cost row minima") {
  // one-to-one relatedness: the row minimum should line up with the matched
  // target for nearly every source category, averaged across seeds
  int matched = 0, total = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SyntheticSpec spec;
    spec.feature_dim = 8;
    spec.target_categories = 4;
    spec.source_categories = 4;
    spec.samples_per_target_train = 10;
    spec.samples_per_target_test = 4;
    spec.samples_per_source = 10;
    spec.relatedness = 1.0;
    spec.seed = seed;
    const auto data = generate(spec);

    const auto source_bank = bank_from_labeled_set(data.source);
    const auto target_bank = bank_from_labeled_set(data.target_train);
    CostMetricParams params;
    const auto cost = build_cost_matrix(source_bank, target_bank, CostMethod::OtDistance, params);

    for (Eigen::Index s = 0; s < cost.rows(); ++s) {
      Eigen::Index min_col = 0;
      cost.entries.row(s).minCoeff(&min_col);
      if (min_col == data.source_match[static_cast<std::size_t>(s)]) ++matched;
      ++total;
    }
  }
  CHECK(static_cast<double>(matched) / total >= 0.9);
}

TEST_CASE("invalid specs are rejected") {
  SyntheticSpec spec = small_spec();
  spec.relatedness = 1.5;
  CHECK_THROWS_AS(generate(spec), InvalidSpec);
  spec = small_spec();
  spec.noise_sigma = 0.0;
  CHECK_THROWS_AS(generate(spec), InvalidSpec);
  spec = small_spec();
  spec.samples_per_source = 0;
  CHECK_THROWS_AS(generate(spec), InvalidSpec);
}

TEST_CASE("labeled sets round-trip bit-exactly") {
  const auto data = generate(small_spec());
  const auto path = (temp_dir() / "roundtrip.lset").string();
  save_labeled_set(data.source, path);
  const auto loaded = load_labeled_set(path);
  CHECK(loaded.label_count == data.source.label_count);
  CHECK(loaded.labels == data.source.labels);
  CHECK((loaded.features.array() == data.source.features.array()).all());
}

TEST_CASE("labeled-set parsing failures carry their diagnosis") {
  const auto dir = temp_dir();

  write_text(dir / "empty.lset", "");
  CHECK_THROWS_AS(load_labeled_set((dir / "empty.lset").string()), ParseError);

  write_text(dir / "bad_label.lset", "feature_dim=2,label_count=2\n5,0.0,0.0\n");
  CHECK_THROWS_AS(load_labeled_set((dir / "bad_label.lset").string()), SchemaError);

  write_text(dir / "short_row.lset", "feature_dim=3,label_count=2\n1,0.5,0.5\n");
  CHECK_THROWS_AS(load_labeled_set((dir / "short_row.lset").string()), SchemaError);

  write_text(dir / "garbage.lset", "feature_dim=2,label_count=2\n1,zero,0.0\n");
  CHECK_THROWS_AS(load_labeled_set((dir / "garbage.lset").string()), ParseError);

  write_text(dir / "no_header.lset", "1,0.5,0.5\n");
  CHECK_THROWS_AS(load_labeled_set((dir / "no_header.lset").string()), std::runtime_error);

  write_text(dir / "missing_field.lset", "feature_dim=2\n1,0.5,0.5\n");
  CHECK_THROWS_AS(load_labeled_set((dir / "missing_field.lset").string()), SchemaError);
}

TEST_CASE("cost matrices round-trip with labels and metadata") {
  CostMatrixFile file;
  file.matrix.entries = Matrix{{0.0, 0.25}, {1.0, 0.125}};
  file.matrix.row_labels = {11, 12};
  file.matrix.col_labels = {3, 4};
  file.normalized = true;
  file.metadata["method"] = "ot";
  file.metadata["norm_factor"] = "12.5";

  const auto path = (temp_dir() / "cost.txt").string();
  save_cost_matrix(file, path);
  const auto loaded = load_cost_matrix(path);
  CHECK((loaded.matrix.entries.array() == file.matrix.entries.array()).all());
  CHECK(loaded.matrix.row_labels == file.matrix.row_labels);
  CHECK(loaded.matrix.col_labels == file.matrix.col_labels);
  CHECK(loaded.normalized);
  CHECK(loaded.metadata.at("method") == "ot");
  CHECK(loaded.metadata.at("norm_factor") == "12.5");
}

TEST_CASE("histograms round-trip through their single-line format") {
  const Histogram histogram{Vector{{0.125, 0.375, 0.5}}, {7, 8, 9}};
  const auto path = (temp_dir() / "hist.txt").string();
  save_histogram(histogram, path);
  const auto loaded = load_histogram(path);
  CHECK((loaded.weights.array() == histogram.weights.array()).all());
  CHECK(loaded.label_ids == histogram.label_ids);

  write_text(temp_dir() / "nonsimplex.txt", "0.5,0.2\n");
  CHECK_THROWS_AS(load_histogram((temp_dir() / "nonsimplex.txt").string()), std::invalid_argument);
}

TEST_CASE("banks group rows by label with uniform weights") {
  const auto data = generate(small_spec());
  const auto bank = bank_from_labeled_set(data.source);
  CHECK(bank.categories.size() == 5);
  CHECK(bank.feature_dim == 4);
  for (const auto& [label, measure] : bank.categories) {
    CHECK(measure.count() == 8);
    CHECK(measure.weights[0] == doctest::Approx(1.0 / 8).epsilon(1e-15));
  }
}

TEST_SUITE_END();
