#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace jtln {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;

// ---------------------------------------------------------------------------
// Error taxonomy
// ---------------------------------------------------------------------------

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Plain-domain scaling hit a value below the representable floor. The caller
// should reduce lambda or rescale the cost matrix.
struct NumericalUnderflow : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InstanceTooLarge : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct InvalidSolution : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct TooFewSamples : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct InvalidSpec : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, long line_number)
      : std::runtime_error(msg + " (line " + std::to_string(line_number) + ")"),
        line(line_number) {}
  long line;
};

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A metric failure annotated with the (source, target) category pair that
// produced it.
struct PairMetricError : std::runtime_error {
  PairMetricError(int source_id, int target_id, const std::string& msg)
      : std::runtime_error("cost metric failed for pair (source " + std::to_string(source_id) +
                           ", target " + std::to_string(target_id) + "): " + msg),
        source_label(source_id),
        target_label(target_id) {}
  int source_label;
  int target_label;
};

template <typename Scalar>
constexpr Scalar simplex_tolerance() {
  return std::is_same_v<Scalar, float> ? Scalar(1e-5) : Scalar(1e-9);
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// Point in a probability simplex over a label set.
template <typename Scalar>
struct HistogramT {
  VectorX<Scalar> weights;
  std::vector<int> label_ids;  // optional; empty means anonymous bins

  Eigen::Index size() const { return weights.size(); }

  void validate() const {
    if (weights.size() < 1) throw std::invalid_argument("histogram needs at least one bin");
    if (!weights.allFinite() || (weights.array() < Scalar(0)).any())
      throw std::invalid_argument("histogram weights must be finite and nonnegative");
    if (std::abs(weights.sum() - Scalar(1)) > simplex_tolerance<Scalar>())
      throw std::invalid_argument("histogram weights must sum to 1");
    if (!label_ids.empty() && static_cast<Eigen::Index>(label_ids.size()) != weights.size())
      throw DimensionMismatch("histogram label list length differs from weight length");
  }
};

// Nonnegative matrix of transfer costs between a source and a target label set.
template <typename Scalar>
struct CostMatrixT {
  MatrixX<Scalar> entries;      // source categories x target categories
  std::vector<int> row_labels;  // source category ids (optional)
  std::vector<int> col_labels;  // target category ids (optional)

  Eigen::Index rows() const { return entries.rows(); }
  Eigen::Index cols() const { return entries.cols(); }

  void validate() const {
    if (entries.rows() < 1 || entries.cols() < 1)
      throw std::invalid_argument("cost matrix must be non-empty");
    if (!entries.allFinite() || (entries.array() < Scalar(0)).any())
      throw std::invalid_argument("cost matrix entries must be finite and nonnegative");
    if (!row_labels.empty() && static_cast<Eigen::Index>(row_labels.size()) != entries.rows())
      throw DimensionMismatch("row label count differs from cost matrix rows");
    if (!col_labels.empty() && static_cast<Eigen::Index>(col_labels.size()) != entries.cols())
      throw DimensionMismatch("column label count differs from cost matrix columns");
  }
};

// Nonnegative coupling whose row and column sums reproduce two marginals.
template <typename Scalar>
struct TransportPlanT {
  MatrixX<Scalar> coupling;
  HistogramT<Scalar> row_marginal;
  HistogramT<Scalar> col_marginal;
};

template <typename Scalar>
struct SinkhornConfigT {
  Scalar lambda = Scalar(100);           // regularization sharpness
  int max_iterations = 1000;             // sweep cap
  Scalar convergence_tol = Scalar(1e-9); // sup-norm change of u between sweeps
  Scalar clamp_epsilon = Scalar(1e-12);  // floor applied to marginal entries

  void validate() const {
    if (!(lambda > Scalar(0))) throw std::invalid_argument("lambda must be positive");
    if (max_iterations < 1) throw std::invalid_argument("max_iterations must be at least 1");
    if (!(convergence_tol > Scalar(0))) throw std::invalid_argument("convergence_tol must be positive");
    if (!(clamp_epsilon > Scalar(0))) throw std::invalid_argument("clamp_epsilon must be positive");
  }
};

template <typename Scalar>
struct OtSolutionT {
  Scalar loss = Scalar(0);     // <coupling, C>_F
  TransportPlanT<Scalar> plan;
  VectorX<Scalar> u, v;        // positive scaling vectors
  int iterations_used = 0;
  bool converged = false;
};

// Simplex-tangent gradients of the transport loss w.r.t. its two marginals;
// each vector sums to zero.
template <typename Scalar>
struct GradientPairT {
  VectorX<Scalar> d_mu;
  VectorX<Scalar> d_nu;
};

using Histogram = HistogramT<double>;
using CostMatrix = CostMatrixT<double>;
using TransportPlan = TransportPlanT<double>;
using SinkhornConfig = SinkhornConfigT<double>;
using OtSolution = OtSolutionT<double>;
using GradientPair = GradientPairT<double>;

}  // namespace jtln
