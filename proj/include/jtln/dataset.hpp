#pragma once

#include "jtln/network.hpp"

#include <cstdint>

namespace jtln {

// Shape of a synthetic transfer problem: Gaussian category clouds in feature
// space, with a `relatedness` fraction of source category means placed within
// noise_sigma of some target category mean and the rest kept at least
// 10*noise_sigma away from every target mean.
struct SyntheticSpec {
  int feature_dim = 8;
  int target_categories = 4;
  int source_categories = 8;
  int samples_per_target_train = 10;
  int samples_per_target_test = 50;
  int samples_per_source = 64;
  double relatedness = 0.9;
  double noise_sigma = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TransferDataset {
  LabeledSet target_train;
  LabeledSet target_test;
  LabeledSet source;

  // Ground truth kept for oracle-style checks only: per-category means and,
  // for each source category, the 0-based target category its mean was placed
  // next to (-1 for unrelated categories).
  Matrix target_means;  // target_categories x feature_dim
  Matrix source_means;  // source_categories x feature_dim
  std::vector<int> source_match;
};

// Deterministic generation from the spec's seed. Category means sit on a
// scaled axis grid; samples are mean + isotropic Gaussian noise. Target train
// and test sets are disjoint by construction (separate draws).
TransferDataset generate(const SyntheticSpec& spec);

}  // namespace jtln
