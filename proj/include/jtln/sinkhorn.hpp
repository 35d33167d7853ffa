#pragma once

#include "jtln/core_types.hpp"

namespace jtln {

namespace detail {

template <typename Scalar>
constexpr Scalar underflow_floor() {
  return std::is_same_v<Scalar, float> ? Scalar(1e-30) : Scalar(1e-300);
}

// Marginal entries below the floor are raised to it and the histogram is
// renormalized; the scaling updates divide by Kv and K^T u, which requires
// strictly positive marginals.
template <typename Scalar>
HistogramT<Scalar> clamp_and_renormalize(const HistogramT<Scalar>& h, Scalar floor) {
  HistogramT<Scalar> out;
  out.weights = h.weights.cwiseMax(floor);
  out.weights /= out.weights.sum();
  out.label_ids = h.label_ids;
  return out;
}

}  // namespace detail

// Entropy-regularized transport between two histograms by alternating
// diagonal scaling of the Gibbs kernel K = exp(-lambda*C - 1):
//
//   v <- nu ./ (K^T u),   u <- mu ./ (K v)
//
// until the sup-norm change of u between sweeps drops below
// config.convergence_tol or config.max_iterations sweeps have run. The
// reported loss is the unregularized transport cost of the regularized plan,
// <diag(u) K diag(v), C>_F.
//
// Scaling runs in the plain domain, exactly as stated above. If any entry of
// Kv or K^T u falls below 1e-300 the solve aborts with NumericalUnderflow;
// callers are expected to keep lambda * max(C) moderate (costs in [0,1] and
// lambda <= 500 are safe).
template <typename Scalar>
OtSolutionT<Scalar> sinkhorn_solve(const HistogramT<Scalar>& mu, const HistogramT<Scalar>& nu,
                                   const CostMatrixT<Scalar>& cost,
                                   const SinkhornConfigT<Scalar>& config) {
  mu.validate();
  nu.validate();
  cost.validate();
  config.validate();
  const Eigen::Index rows = cost.rows();
  const Eigen::Index cols = cost.cols();
  if (mu.size() != rows)
    throw DimensionMismatch("mu has " + std::to_string(mu.size()) + " bins, cost matrix has " +
                            std::to_string(rows) + " rows");
  if (nu.size() != cols)
    throw DimensionMismatch("nu has " + std::to_string(nu.size()) + " bins, cost matrix has " +
                            std::to_string(cols) + " columns");

  const HistogramT<Scalar> mu_c = detail::clamp_and_renormalize(mu, config.clamp_epsilon);
  const HistogramT<Scalar> nu_c = detail::clamp_and_renormalize(nu, config.clamp_epsilon);

  const MatrixX<Scalar> kernel =
      (-config.lambda * cost.entries.array() - Scalar(1)).exp().matrix();

  VectorX<Scalar> u = VectorX<Scalar>::Constant(rows, Scalar(1) / Scalar(rows));
  VectorX<Scalar> v = VectorX<Scalar>::Constant(cols, Scalar(1) / Scalar(cols));

  const Scalar floor = detail::underflow_floor<Scalar>();
  bool converged = false;
  int sweeps = 0;
  while (sweeps < config.max_iterations) {
    VectorX<Scalar> kt_u = kernel.transpose() * u;
    if (kt_u.minCoeff() < floor)
      throw NumericalUnderflow("K^T u underflowed; reduce lambda or rescale the cost matrix");
    v = nu_c.weights.cwiseQuotient(kt_u);

    VectorX<Scalar> kv = kernel * v;
    if (kv.minCoeff() < floor)
      throw NumericalUnderflow("K v underflowed; reduce lambda or rescale the cost matrix");
    VectorX<Scalar> u_next = mu_c.weights.cwiseQuotient(kv);

    const Scalar delta = (u_next - u).template lpNorm<Eigen::Infinity>();
    u = std::move(u_next);
    ++sweeps;
    if (delta < config.convergence_tol) {
      converged = true;
      break;
    }
  }

  OtSolutionT<Scalar> solution;
  solution.plan.coupling = u.asDiagonal() * kernel * v.asDiagonal();
  solution.plan.row_marginal = mu_c;
  solution.plan.col_marginal = nu_c;
  solution.loss = (solution.plan.coupling.array() * cost.entries.array()).sum();
  solution.u = std::move(u);
  solution.v = std::move(v);
  solution.iterations_used = sweeps;
  solution.converged = converged;
  return solution;
}

// Gradients of the transport loss w.r.t. the two marginals, read off the
// scaling vectors:
//
//   d_mu = log(u)/lambda - mean(log(u)/lambda)
//   d_nu = log(v)/lambda - mean(log(v)/lambda)
//
// The mean subtraction removes the constant-shift ambiguity of the dual
// potentials and makes each gradient tangent to its simplex (entries sum to
// zero), so following it preserves total mass.
template <typename Scalar>
GradientPairT<Scalar> ot_loss_gradients(const OtSolutionT<Scalar>& solution,
                                        const SinkhornConfigT<Scalar>& config) {
  config.validate();
  if (solution.u.size() < 1 || solution.v.size() < 1)
    throw InvalidSolution("solution scaling vectors are empty");
  if ((solution.u.array() <= Scalar(0)).any() || (solution.v.array() <= Scalar(0)).any())
    throw InvalidSolution("solution scaling vectors must be strictly positive");

  GradientPairT<Scalar> grad;
  const auto log_u = solution.u.array().log();
  const auto log_v = solution.v.array().log();
  grad.d_mu = ((log_u - log_u.mean()) / config.lambda).matrix();
  grad.d_nu = ((log_v - log_v.mean()) / config.lambda).matrix();
  return grad;
}

// Sum of coupling .* log(coupling) with the 0*log(0) = 0 convention.
// Nonpositive for couplings on the simplex; the regularized objective adds
// -(1/lambda) times this quantity to the transport cost.
template <typename Scalar>
Scalar plan_entropy(const TransportPlanT<Scalar>& plan) {
  const auto& g = plan.coupling.array();
  return (g > Scalar(0)).select(g * g.log(), MatrixX<Scalar>::Zero(g.rows(), g.cols()).array()).sum();
}

}  // namespace jtln
