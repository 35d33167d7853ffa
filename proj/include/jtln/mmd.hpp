#pragma once

#include "jtln/core_types.hpp"
#include "jtln/rng.hpp"

#include <algorithm>
#include <cstdint>

namespace jtln {

// Weighted point cloud in feature space, one sample per row.
template <typename Scalar>
struct EmpiricalMeasureT {
  MatrixX<Scalar> points;
  VectorX<Scalar> weights;

  static EmpiricalMeasureT from_points(MatrixX<Scalar> pts) {
    EmpiricalMeasureT m;
    m.weights = VectorX<Scalar>::Constant(pts.rows(), Scalar(1) / Scalar(pts.rows()));
    m.points = std::move(pts);
    return m;
  }

  Eigen::Index count() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }

  void validate() const {
    if (points.rows() < 1) throw std::invalid_argument("empirical measure needs at least one point");
    if (!points.allFinite()) throw std::invalid_argument("empirical measure coordinates must be finite");
    if (weights.size() != points.rows())
      throw DimensionMismatch("weight count differs from point count");
    if (!weights.allFinite() || (weights.array() < Scalar(0)).any() ||
        std::abs(weights.sum() - Scalar(1)) > simplex_tolerance<Scalar>())
      throw std::invalid_argument("weights must form a probability vector");
  }
};

// Convex combination of Gaussian kernels exp(-|x-y|^2 / (2 sigma_u^2)).
template <typename Scalar>
struct KernelSpecT {
  std::vector<Scalar> bandwidths;
  std::vector<Scalar> coefficients;

  void validate() const {
    if (bandwidths.empty() || bandwidths.size() != coefficients.size())
      throw std::invalid_argument("kernel needs matching, non-empty bandwidth and coefficient lists");
    Scalar sum = 0;
    for (std::size_t u = 0; u < bandwidths.size(); ++u) {
      if (!(bandwidths[u] > Scalar(0))) throw std::invalid_argument("bandwidths must be positive");
      if (coefficients[u] < Scalar(0)) throw std::invalid_argument("coefficients must be nonnegative");
      sum += coefficients[u];
    }
    if (std::abs(sum - Scalar(1)) > simplex_tolerance<Scalar>())
      throw std::invalid_argument("kernel coefficients must sum to 1");
  }

  // Kernel value from a squared distance.
  Scalar operator()(Scalar sq_dist) const {
    Scalar k = 0;
    for (std::size_t u = 0; u < bandwidths.size(); ++u)
      k += coefficients[u] * std::exp(-sq_dist / (Scalar(2) * bandwidths[u] * bandwidths[u]));
    return k;
  }
};

// n_a x n_b matrix of squared Euclidean distances between two row sets.
template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> pairwise_sq_dists(const Eigen::MatrixBase<DerivedA>& a,
                                                     const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.cols() != b.cols()) throw DimensionMismatch("point sets have different feature dimensions");
  MatrixX<Scalar> d = Scalar(-2) * (a * b.transpose());
  d.colwise() += a.rowwise().squaredNorm();
  d.rowwise() += b.rowwise().squaredNorm().transpose();
  return d.cwiseMax(Scalar(0));  // guard against negative rounding dust
}

template <typename Scalar>
MatrixX<Scalar> kernel_matrix(const KernelSpecT<Scalar>& kernel, const MatrixX<Scalar>& sq_dists) {
  MatrixX<Scalar> k = MatrixX<Scalar>::Zero(sq_dists.rows(), sq_dists.cols());
  for (std::size_t u = 0; u < kernel.bandwidths.size(); ++u) {
    const Scalar denom = Scalar(2) * kernel.bandwidths[u] * kernel.bandwidths[u];
    k.array() += kernel.coefficients[u] * (-sq_dists.array() / denom).exp();
  }
  return k;
}

// Bandwidth ladder {1/4, 1/2, 1, 2, 4} x median pairwise distance of the
// pooled samples, with uniform coefficients. Falls back to bandwidth 1 when
// all pooled points coincide.
template <typename Scalar>
KernelSpecT<Scalar> median_heuristic_kernel(const EmpiricalMeasureT<Scalar>& a,
                                            const EmpiricalMeasureT<Scalar>& b) {
  if (a.dim() != b.dim()) throw DimensionMismatch("measures have different feature dimensions");
  MatrixX<Scalar> pooled(a.count() + b.count(), a.dim());
  pooled << a.points, b.points;
  std::vector<Scalar> dists;
  dists.reserve(static_cast<std::size_t>(pooled.rows()) * (pooled.rows() - 1) / 2);
  for (Eigen::Index i = 0; i < pooled.rows(); ++i)
    for (Eigen::Index j = i + 1; j < pooled.rows(); ++j)
      dists.push_back((pooled.row(i) - pooled.row(j)).norm());
  Scalar median = Scalar(1);
  if (!dists.empty()) {
    const std::size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
    median = dists[mid];
  }
  if (!(median > Scalar(0))) median = Scalar(1);

  KernelSpecT<Scalar> spec;
  for (const Scalar factor : {Scalar(0.25), Scalar(0.5), Scalar(1), Scalar(2), Scalar(4)}) {
    spec.bandwidths.push_back(factor * median);
    spec.coefficients.push_back(Scalar(1) / Scalar(5));
  }
  return spec;
}

// Quadratic-time unbiased estimate of the squared kernel discrepancy between
// two samples: off-diagonal within-set kernel means minus twice the full
// cross-pair mean. Can be slightly negative by unbiasedness.
template <typename Scalar>
Scalar mk_mmd_squared(const EmpiricalMeasureT<Scalar>& a, const EmpiricalMeasureT<Scalar>& b,
                      const KernelSpecT<Scalar>& kernel) {
  a.validate();
  b.validate();
  kernel.validate();
  if (a.dim() != b.dim()) throw DimensionMismatch("measures have different feature dimensions");
  if (a.count() < 2 || b.count() < 2)
    throw TooFewSamples("quadratic estimator needs at least 2 points per side");

  const Scalar na = Scalar(a.count()), nb = Scalar(b.count());
  const MatrixX<Scalar> kaa = kernel_matrix(kernel, pairwise_sq_dists(a.points, a.points));
  const MatrixX<Scalar> kbb = kernel_matrix(kernel, pairwise_sq_dists(b.points, b.points));
  const MatrixX<Scalar> kab = kernel_matrix(kernel, pairwise_sq_dists(a.points, b.points));
  const Scalar within_a = (kaa.sum() - kaa.trace()) / (na * (na - 1));
  const Scalar within_b = (kbb.sum() - kbb.trace()) / (nb * (nb - 1));
  const Scalar cross = kab.sum() / (na * nb);
  return within_a + within_b - 2 * cross;
}

// Linear-time unbiased estimate from disjoint quad-tuples: both sides are
// shuffled, consumed two at a time, and each tuple contributes
//   k(a1,a2) + k(b1,b2) - k(a1,b2) - k(a2,b1).
// A negative seed keeps the given sample order (identity shuffle); otherwise
// each side is shuffled by its own stream derived from the seed. Sides of
// unequal size are truncated to the smaller even count.
template <typename Scalar>
Scalar mk_mmd_linear(const EmpiricalMeasureT<Scalar>& a, const EmpiricalMeasureT<Scalar>& b,
                     const KernelSpecT<Scalar>& kernel, std::int64_t seed) {
  a.validate();
  b.validate();
  kernel.validate();
  if (a.dim() != b.dim()) throw DimensionMismatch("measures have different feature dimensions");
  if (a.count() < 4 || b.count() < 4)
    throw TooFewSamples("linear estimator needs at least 4 points per side");
  const auto uniform = [](const VectorX<Scalar>& w) {
    const Scalar expected = Scalar(1) / Scalar(w.size());
    return (w.array() - expected).abs().maxCoeff() <= simplex_tolerance<Scalar>();
  };
  if (!uniform(a.weights) || !uniform(b.weights))
    throw std::invalid_argument("linear estimator is defined for uniformly weighted samples");

  std::vector<int> order_a(static_cast<std::size_t>(a.count()));
  std::vector<int> order_b(static_cast<std::size_t>(b.count()));
  for (std::size_t i = 0; i < order_a.size(); ++i) order_a[i] = static_cast<int>(i);
  for (std::size_t i = 0; i < order_b.size(); ++i) order_b[i] = static_cast<int>(i);
  if (seed >= 0) {
    Rng rng_a(static_cast<std::uint64_t>(seed), 0);
    Rng rng_b(static_cast<std::uint64_t>(seed), 1);
    rng_a.shuffle(order_a);
    rng_b.shuffle(order_b);
  }

  const Eigen::Index n = 2 * (std::min(a.count(), b.count()) / 2);
  const auto k = [&](const auto& x, const auto& y) { return kernel((x - y).squaredNorm()); };
  Scalar sum = 0;
  for (Eigen::Index t = 0; t + 1 < n; t += 2) {
    const auto a1 = a.points.row(order_a[static_cast<std::size_t>(t)]);
    const auto a2 = a.points.row(order_a[static_cast<std::size_t>(t + 1)]);
    const auto b1 = b.points.row(order_b[static_cast<std::size_t>(t)]);
    const auto b2 = b.points.row(order_b[static_cast<std::size_t>(t + 1)]);
    sum += k(a1, a2) + k(b1, b2) - k(a1, b2) - k(a2, b1);
  }
  return Scalar(2) * sum / Scalar(n);
}

using EmpiricalMeasure = EmpiricalMeasureT<double>;
using KernelSpec = KernelSpecT<double>;

}  // namespace jtln
