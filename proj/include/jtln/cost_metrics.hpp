#pragma once

#include "jtln/mmd.hpp"
#include "jtln/sinkhorn.hpp"

#include <map>
#include <optional>
#include <string>

namespace jtln {

// Per-category feature samples sharing one feature dimension.
template <typename Scalar>
struct CategoryBankT {
  std::map<int, EmpiricalMeasureT<Scalar>> categories;
  Eigen::Index feature_dim = 0;

  void validate() const {
    if (categories.empty()) throw std::invalid_argument("category bank is empty");
    for (const auto& [id, measure] : categories) {
      measure.validate();
      if (measure.dim() != feature_dim)
        throw DimensionMismatch("category " + std::to_string(id) +
                                " does not match the bank feature dimension");
    }
  }
};

enum class CostMethod { MkMmdLinear, MkMmdSquared, OtDistance };

inline std::string to_string(CostMethod method) {
  switch (method) {
    case CostMethod::MkMmdLinear: return "mkmmd-linear";
    case CostMethod::MkMmdSquared: return "mkmmd-squared";
    case CostMethod::OtDistance: return "ot";
  }
  return "unknown";
}

inline CostMethod cost_method_from_string(const std::string& name) {
  if (name == "mkmmd-linear") return CostMethod::MkMmdLinear;
  if (name == "mkmmd-squared") return CostMethod::MkMmdSquared;
  if (name == "ot") return CostMethod::OtDistance;
  throw InvalidSpec("unknown cost method '" + name + "'");
}

template <typename Scalar>
struct CostMetricParamsT {
  // Kernel for the MMD methods; when absent, a median-heuristic ladder is
  // fitted per category pair.
  std::optional<KernelSpecT<Scalar>> kernel;
  SinkhornConfigT<Scalar> sinkhorn{Scalar(200), 100000, Scalar(1e-9), Scalar(1e-12)};
  std::uint64_t seed = 0;    // base seed for the linear estimator's shuffles
  int shuffle_repeats = 16;  // linear-estimator averaging per pair
};

// Entropy-regularized transport distance between two clouds under squared
// Euclidean ground cost. The cost matrix is scaled by its maximum entry to
// keep the plain-domain solver in a safe range and the result is returned in
// original units.
template <typename Scalar>
Scalar ot_distance(const EmpiricalMeasureT<Scalar>& a, const EmpiricalMeasureT<Scalar>& b,
                   const SinkhornConfigT<Scalar>& config) {
  a.validate();
  b.validate();
  CostMatrixT<Scalar> ground{pairwise_sq_dists(a.points, b.points), {}, {}};
  const Scalar scale = ground.entries.maxCoeff();
  if (scale > Scalar(0)) ground.entries /= scale;
  const auto solution = sinkhorn_solve(HistogramT<Scalar>{a.weights, {}},
                                       HistogramT<Scalar>{b.weights, {}}, ground, config);
  return (scale > Scalar(0) ? scale : Scalar(1)) * solution.loss;
}

namespace detail {

// Deterministic per-pair seed so parallel pair evaluation cannot change results.
inline std::uint64_t pair_seed(std::uint64_t base, int row, int col) {
  std::uint64_t s = splitmix64_mix(base + 0x9E3779B97F4A7C15ULL);
  s = splitmix64_mix(s ^ (static_cast<std::uint64_t>(row + 1) * 0xBF58476D1CE4E5B9ULL));
  s = splitmix64_mix(s ^ (static_cast<std::uint64_t>(col + 1) * 0x94D049BB133111EBULL));
  return s;
}

}  // namespace detail

// Cost matrix over (source category, target category) pairs from the chosen
// distribution distance. Negative MMD estimates are clamped to zero, and the
// matrix is scaled by its maximum entry so costs lie in [0,1] (skipped when
// all entries are zero). The pre-normalization maximum is written to
// norm_factor_out when provided.
template <typename Scalar>
CostMatrixT<Scalar> build_cost_matrix(const CategoryBankT<Scalar>& source,
                                      const CategoryBankT<Scalar>& target, CostMethod method,
                                      const CostMetricParamsT<Scalar>& params,
                                      Scalar* norm_factor_out = nullptr) {
  source.validate();
  target.validate();
  if (source.feature_dim != target.feature_dim)
    throw DimensionMismatch("source and target banks have different feature dimensions");

  CostMatrixT<Scalar> cost;
  cost.entries.resize(static_cast<Eigen::Index>(source.categories.size()),
                      static_cast<Eigen::Index>(target.categories.size()));
  for (const auto& [id, measure] : source.categories) cost.row_labels.push_back(id);
  for (const auto& [id, measure] : target.categories) cost.col_labels.push_back(id);

  int i = 0;
  for (const auto& [source_id, source_measure] : source.categories) {
    int j = 0;
    for (const auto& [target_id, target_measure] : target.categories) {
      try {
        Scalar value = 0;
        switch (method) {
          case CostMethod::OtDistance:
            value = ot_distance(source_measure, target_measure, params.sinkhorn);
            break;
          case CostMethod::MkMmdSquared: {
            const auto kernel =
                params.kernel ? *params.kernel : median_heuristic_kernel(source_measure, target_measure);
            value = std::max(Scalar(0), mk_mmd_squared(source_measure, target_measure, kernel));
            break;
          }
          case CostMethod::MkMmdLinear: {
            const auto kernel =
                params.kernel ? *params.kernel : median_heuristic_kernel(source_measure, target_measure);
            const int repeats = std::max(1, params.shuffle_repeats);
            const std::uint64_t seed = detail::pair_seed(params.seed, i, j);
            Scalar sum = 0;
            for (int r = 0; r < repeats; ++r) {
              const auto shuffle_seed =
                  static_cast<std::int64_t>(splitmix64_mix(seed + static_cast<std::uint64_t>(r)) >> 1);
              sum += mk_mmd_linear(source_measure, target_measure, kernel, shuffle_seed);
            }
            value = std::max(Scalar(0), sum / Scalar(repeats));
            break;
          }
        }
        cost.entries(i, j) = value;
      } catch (const std::exception& e) {
        throw PairMetricError(source_id, target_id, e.what());
      }
      ++j;
    }
    ++i;
  }

  const Scalar max_entry = cost.entries.maxCoeff();
  if (max_entry > Scalar(0)) cost.entries /= max_entry;
  if (norm_factor_out) *norm_factor_out = max_entry;
  return cost;
}

using CategoryBank = CategoryBankT<double>;
using CostMetricParams = CostMetricParamsT<double>;

}  // namespace jtln
