#include "jtln/dataset.hpp"

#include <cmath>
#include <string>

namespace jtln {

namespace {

constexpr std::uint64_t kTargetMeanStream = 21;
constexpr std::uint64_t kSourcePlacementStream = 22;
constexpr std::uint64_t kNoiseStreamBase = 1000;

// Pairwise separation of neighbouring target means, in noise units. Large
// enough that categories are learnable, small enough that a handful of
// target samples does not saturate accuracy.
constexpr double kTargetSeparation = 3.0;

// Axis-corner grid: index k maps to (1 + k/dim) * e_{k mod dim}.
Vector grid_corner(int k, int dim) {
  Vector v = Vector::Zero(dim);
  v[k % dim] = 1.0 + static_cast<double>(k / dim);
  return v;
}

Vector random_unit(int dim, Rng& rng) {
  Vector v(dim);
  double norm = 0;
  do {
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    norm = v.norm();
  } while (norm < 1e-12);
  return v / norm;
}

// Noise streams are derived per (set, category) so changing one category's
// sample count cannot reshuffle another category's noise.
Matrix sample_cloud(const Vector& mean, int count, double sigma, std::uint64_t seed,
                    std::uint64_t stream) {
  Rng rng(seed, stream);
  Matrix points(count, mean.size());
  for (int r = 0; r < count; ++r)
    for (Eigen::Index c = 0; c < mean.size(); ++c) points(r, c) = mean[c] + sigma * rng.normal();
  return points;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (feature_dim < 1 || target_categories < 1 || source_categories < 1 ||
      samples_per_target_train < 1 || samples_per_target_test < 1 || samples_per_source < 1)
    throw InvalidSpec("all dimensions and sample counts must be at least 1");
  if (!(relatedness >= 0.0 && relatedness <= 1.0))
    throw InvalidSpec("relatedness must lie in [0, 1]");
  if (!(noise_sigma > 0.0)) throw InvalidSpec("noise_sigma must be positive");
}

TransferDataset generate(const SyntheticSpec& spec) {
  spec.validate();
  const int dim = spec.feature_dim;
  const double sigma = spec.noise_sigma;

  TransferDataset data;

  // Target means: axis corners scaled so neighbouring means sit
  // kTargetSeparation * sigma apart.
  const double target_scale = kTargetSeparation * sigma / std::sqrt(2.0);
  data.target_means.resize(spec.target_categories, dim);
  for (int k = 0; k < spec.target_categories; ++k)
    data.target_means.row(k) = (target_scale * grid_corner(k, dim)).transpose();

  // Source means: a seeded subset of `relatedness * source_categories` lands
  // within sigma of a uniformly chosen target mean; the rest go to remote
  // corners on the negative axes, at least 10*sigma from every target mean.
  const int related_count =
      static_cast<int>(std::llround(spec.relatedness * spec.source_categories));
  Rng placement(spec.seed, kSourcePlacementStream);
  std::vector<int> source_ids = placement.permutation(spec.source_categories);

  data.source_means.resize(spec.source_categories, dim);
  data.source_match.assign(static_cast<std::size_t>(spec.source_categories), -1);
  int unrelated_index = 0;
  for (int rank = 0; rank < spec.source_categories; ++rank) {
    const int s = source_ids[static_cast<std::size_t>(rank)];
    if (rank < related_count) {
      const int t = static_cast<int>(placement.bounded(spec.target_categories));
      const double radius = sigma * placement.uniform();
      data.source_means.row(s) =
          data.target_means.row(t) + (radius * random_unit(dim, placement)).transpose();
      data.source_match[static_cast<std::size_t>(s)] = t;
    } else {
      const double radius = (10.0 * (1.0 + unrelated_index / dim) + 2.0) * sigma +
                            target_scale * (1.0 + (spec.target_categories - 1) / dim);
      data.source_means.row(s) = (-radius * grid_corner(unrelated_index, dim) /
                                  grid_corner(unrelated_index, dim).norm())
                                     .transpose();
      ++unrelated_index;
    }
  }

  const auto fill_set = [&](LabeledSet& set, int categories, int per_category,
                            const Matrix& means, std::uint64_t stream_base) {
    set.features.resize(static_cast<Eigen::Index>(categories) * per_category, dim);
    set.labels.clear();
    set.labels.reserve(static_cast<std::size_t>(categories) * per_category);
    set.label_count = categories;
    for (int c = 0; c < categories; ++c) {
      const Matrix cloud = sample_cloud(means.row(c).transpose(), per_category, sigma, spec.seed,
                                        stream_base + static_cast<std::uint64_t>(c));
      set.features.middleRows(static_cast<Eigen::Index>(c) * per_category, per_category) = cloud;
      for (int r = 0; r < per_category; ++r) set.labels.push_back(c + 1);
    }
  };

  fill_set(data.target_train, spec.target_categories, spec.samples_per_target_train,
           data.target_means, kNoiseStreamBase);
  fill_set(data.target_test, spec.target_categories, spec.samples_per_target_test,
           data.target_means, kNoiseStreamBase + 10000);
  fill_set(data.source, spec.source_categories, spec.samples_per_source, data.source_means,
           kNoiseStreamBase + 20000);
  return data;
}

}  // namespace jtln
