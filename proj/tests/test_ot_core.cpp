#include <doctest.h>

#include "jtln/exact_ot.hpp"
#include "jtln/rng.hpp"
#include "jtln/sinkhorn.hpp"
#include "oracles.hpp"

using namespace jtln;

namespace {

SinkhornConfig tight_config(double lambda, int max_iterations = 200000) {
  SinkhornConfig config;
  config.lambda = lambda;
  config.max_iterations = max_iterations;
  return config;
}

double max_marginal_residual(const OtSolution& solution) {
  const Vector row = solution.plan.coupling.rowwise().sum() - solution.plan.row_marginal.weights;
  const Vector col =
      solution.plan.coupling.colwise().sum().transpose() - solution.plan.col_marginal.weights;
  return std::max(row.lpNorm<Eigen::Infinity>(), col.lpNorm<Eigen::Infinity>());
}

const CostMatrix kSwapCost{Matrix{{0.0, 1.0}, {1.0, 0.0}}, {}, {}};

}  // namespace

TEST_SUITE_BEGIN("ot_core");

TEST_CASE("point masses route all mass across the off-diagonal cell") {
  const Histogram mu{Vector{{1.0, 0.0}}, {}};
  const Histogram nu{Vector{{0.0, 1.0}}, {}};
  const auto solution = sinkhorn_solve(mu, nu, kSwapCost, tight_config(50));
  CHECK(solution.loss == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(solution.plan.coupling(0, 1) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(solution.plan.coupling(1, 0) == doctest::Approx(0.0).scale(1).epsilon(1e-6));
  // clamped marginals are what the plan reproduces
  CHECK(solution.plan.row_marginal.weights.minCoeff() > 0.0);
}

TEST_CASE("zero-cost diagonal matching at sharp regularization") {
  const Histogram half{Vector{{0.5, 0.5}}, {}};
  const auto solution = sinkhorn_solve(half, half, kSwapCost, tight_config(200));
  CHECK(solution.loss <= 0.01);
  CHECK(solution.plan.coupling(0, 0) == doctest::Approx(0.5).epsilon(1e-2));
  CHECK(solution.plan.coupling(1, 1) == doctest::Approx(0.5).epsilon(1e-2));
}

TEST_CASE("sinkhorn approaches the exact optimum on the lopsided 2x2") {
  const Histogram mu{Vector{{0.5, 0.5}}, {}};
  const Histogram nu{Vector{{0.3, 0.7}}, {}};

  const auto exact = exact_ot_solve(mu, nu, kSwapCost);
  CHECK(exact.loss == doctest::Approx(0.2).epsilon(1e-12));
  // unique optimum here, so the plan itself is pinned
  CHECK(exact.plan.coupling(0, 0) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(exact.plan.coupling(0, 1) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(exact.plan.coupling(1, 0) == doctest::Approx(0.0).scale(1).epsilon(1e-12));
  CHECK(exact.plan.coupling(1, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(oracle::grid_ot_2x2(mu, nu, kSwapCost) == doctest::Approx(0.2).epsilon(1e-4));

  const auto solution = sinkhorn_solve(mu, nu, kSwapCost, tight_config(200));
  CHECK(std::abs(solution.loss - 0.2) <= 0.01);
}

TEST_CASE("solved plans reproduce their marginals") {
  Rng rng(101);
  const auto mu = oracle::random_histogram(5, rng);
  const auto nu = oracle::random_histogram(7, rng);
  const auto cost = oracle::random_cost(5, 7, rng);
  const auto solution = sinkhorn_solve(mu, nu, cost, tight_config(100));
  CHECK(max_marginal_residual(solution) <= 1e-6);

  // property over random shapes
  for (int trial = 0; trial < 10; ++trial) {
    const int rows = 2 + static_cast<int>(rng.bounded(19));
    const int cols = 2 + static_cast<int>(rng.bounded(19));
    const auto m = oracle::random_histogram(rows, rng);
    const auto n = oracle::random_histogram(cols, rng);
    const auto c = oracle::random_cost(rows, cols, rng);
    const auto s = sinkhorn_solve(m, n, c, tight_config(trial % 2 == 0 ? 10 : 100));
    CHECK(max_marginal_residual(s) <= 1e-6);
    CHECK(s.loss >= 0.0);
    // loss is recomputable from the stored plan
    const double recomputed = (s.plan.coupling.array() * c.entries.array()).sum();
    CHECK(s.loss == doctest::Approx(recomputed).epsilon(1e-12));
  }
}

TEST_CASE("shape mismatches are rejected") {
  const Histogram mu{Vector{{0.5, 0.5}}, {}};
  const Histogram three{Vector{{0.2, 0.3, 0.5}}, {}};
  CHECK_THROWS_AS(sinkhorn_solve(three, mu, kSwapCost, SinkhornConfig{}), DimensionMismatch);
  CHECK_THROWS_AS(sinkhorn_solve(mu, three, kSwapCost, SinkhornConfig{}), DimensionMismatch);
  CHECK_THROWS_AS(exact_ot_solve(mu, three, kSwapCost), DimensionMismatch);
}

TEST_CASE("hitting the sweep cap sets the flag without failing") {
  Rng rng(71);
  const auto mu = oracle::random_histogram(6, rng);
  const auto nu = oracle::random_histogram(6, rng);
  const auto cost = oracle::random_cost(6, 6, rng);
  SinkhornConfig starved;
  starved.lambda = 100;
  starved.max_iterations = 2;
  const auto solution = sinkhorn_solve(mu, nu, cost, starved);
  CHECK_FALSE(solution.converged);
  CHECK(solution.iterations_used == 2);
  CHECK(std::isfinite(solution.loss));
  // rows are exact after the closing u-update even without convergence
  const Vector row_res = solution.plan.coupling.rowwise().sum() - solution.plan.row_marginal.weights;
  CHECK(row_res.lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("underflow is reported, not masked") {
  // unnormalized costs push every kernel entry below the representable floor
  const Histogram mu{Vector{{0.5, 0.5}}, {}};
  const CostMatrix huge{Matrix::Constant(2, 2, 700.0), {}, {}};
  CHECK_THROWS_AS(sinkhorn_solve(mu, mu, huge, tight_config(1.0)), NumericalUnderflow);
}

TEST_CASE("identical inputs give bit-identical solutions") {
  Rng rng(55);
  const auto mu = oracle::random_histogram(6, rng);
  const auto nu = oracle::random_histogram(4, rng);
  const auto cost = oracle::random_cost(6, 4, rng);
  const auto a = sinkhorn_solve(mu, nu, cost, tight_config(80));
  const auto b = sinkhorn_solve(mu, nu, cost, tight_config(80));
  CHECK(a.loss == b.loss);
  CHECK(a.iterations_used == b.iterations_used);
  CHECK((a.u.array() == b.u.array()).all());
  CHECK((a.v.array() == b.v.array()).all());
  CHECK((a.plan.coupling.array() == b.plan.coupling.array()).all());
}

TEST_CASE("entropic loss decreases toward the exact value as lambda grows") {
  Rng rng(303);
  for (int trial = 0; trial < 6; ++trial) {
    const int rows = 2 + static_cast<int>(rng.bounded(4));
    const int cols = 2 + static_cast<int>(rng.bounded(4));
    const auto mu = oracle::random_histogram(rows, rng);
    const auto nu = oracle::random_histogram(cols, rng);
    const auto cost = oracle::random_cost(rows, cols, rng);
    const double exact = exact_ot_solve(mu, nu, cost).loss;

    double previous_gap = std::numeric_limits<double>::max();
    for (const double lambda : {1.0, 10.0, 50.0, 200.0}) {
      const double gap = sinkhorn_solve(mu, nu, cost, tight_config(lambda)).loss - exact;
      CHECK(gap >= -1e-9);
      CHECK(gap <= previous_gap + 1e-9);
      previous_gap = gap;
    }
    CHECK(previous_gap <= 1e-2);  // lambda = 200
  }
}

TEST_CASE("gradients match tangent finite differences of the regularized objective") {
  Rng rng(77);
  for (int trial = 0; trial < 6; ++trial) {
    const int rows = 2 + static_cast<int>(rng.bounded(4));
    const int cols = 2 + static_cast<int>(rng.bounded(4));
    const auto mu = oracle::random_histogram(rows, rng, 0.15);
    const auto nu = oracle::random_histogram(cols, rng, 0.15);
    const auto cost = oracle::random_cost(rows, cols, rng);
    const auto config = tight_config(trial % 2 == 0 ? 50 : 150);

    const auto solution = sinkhorn_solve(mu, nu, cost, config);
    const auto grad = ot_loss_gradients(solution, config);
    const double scale = std::max({grad.d_mu.lpNorm<Eigen::Infinity>(),
                                   grad.d_nu.lpNorm<Eigen::Infinity>(), 1e-8});

    for (int k = 0; k < rows; ++k) {
      const double fd = oracle::simplex_tangent_fd(
          [&](const Vector& w) { return oracle::regularized_value({w, {}}, nu, cost, config); },
          mu.weights, k);
      CHECK(std::abs(fd - grad.d_mu[k]) / scale <= 1e-4);
    }
    for (int k = 0; k < cols; ++k) {
      const double fd = oracle::simplex_tangent_fd(
          [&](const Vector& w) { return oracle::regularized_value(mu, {w, {}}, cost, config); },
          nu.weights, k);
      CHECK(std::abs(fd - grad.d_nu[k]) / scale <= 1e-4);
    }

    CHECK(std::abs(grad.d_mu.sum()) <= 1e-8);
    CHECK(std::abs(grad.d_nu.sum()) <= 1e-8);
  }
}

TEST_CASE("gradient sign on the lopsided 2x2 follows the finite-difference oracle") {
  const Histogram mu{Vector{{0.5, 0.5}}, {}};
  const Histogram nu{Vector{{0.3, 0.7}}, {}};
  const auto config = tight_config(200);
  const auto grad = ot_loss_gradients(sinkhorn_solve(mu, nu, kSwapCost, config), config);

  const double fd = oracle::simplex_tangent_fd(
      [&](const Vector& w) { return oracle::regularized_value(mu, {w, {}}, kSwapCost, config); },
      nu.weights, 1);
  // pushing mass toward the already-heavy bin forces more off-diagonal flow
  CHECK(fd > 0.0);
  CHECK(grad.d_nu[1] - grad.d_nu[0] > 0.0);
  CHECK(grad.d_nu[1] == doctest::Approx(fd).epsilon(1e-3));
}

TEST_CASE("exchange-symmetric instances have mirrored gradients") {
  const auto config = tight_config(100);
  // uniform marginals over a symmetric zero-diagonal cost: both gradients vanish
  const Histogram half{Vector{{0.5, 0.5}}, {}};
  const auto sym = ot_loss_gradients(sinkhorn_solve(half, half, kSwapCost, config), config);
  CHECK(sym.d_mu.lpNorm<Eigen::Infinity>() <= 1e-10);
  CHECK((sym.d_mu + sym.d_nu).lpNorm<Eigen::Infinity>() <= 1e-8);

  // Equal non-uniform marginals give coinciding centered gradients. Kept at
  // small lambda: the gauge between u and v equilibrates at the kernel's
  // connectivity rate, which collapses once exp(-lambda) underflows the
  // off-diagonal cells.
  const Histogram skew{Vector{{0.3, 0.7}}, {}};
  const auto mirror_config = tight_config(5);
  const auto grad = ot_loss_gradients(sinkhorn_solve(skew, skew, kSwapCost, mirror_config),
                                      mirror_config);
  CHECK((grad.d_mu - grad.d_nu).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("tampered solutions are rejected by the gradient reader") {
  const Histogram half{Vector{{0.5, 0.5}}, {}};
  auto solution = sinkhorn_solve(half, half, kSwapCost, tight_config(50));
  solution.u[0] = 0.0;
  CHECK_THROWS_AS(ot_loss_gradients(solution, tight_config(50)), InvalidSolution);
}

TEST_CASE("exact solver: identity coupling and point masses") {
  const Histogram skew{Vector{{0.3, 0.7}}, {}};
  CHECK(exact_ot_solve(skew, skew, kSwapCost).loss == doctest::Approx(0.0).scale(1).epsilon(1e-12));

  const Histogram left{Vector{{1.0, 0.0}}, {}};
  const Histogram right{Vector{{0.0, 1.0}}, {}};
  Rng rng(9);
  const auto cost = oracle::random_cost(2, 2, rng);
  CHECK(exact_ot_solve(left, right, cost).loss ==
        doctest::Approx(cost.entries(0, 1)).epsilon(1e-12));
}

TEST_CASE("exact solver agrees with grid enumeration on tiny instances") {
  Rng rng(404);
  for (int trial = 0; trial < 8; ++trial) {
    const auto mu2 = oracle::random_histogram(2, rng, 0.05);
    const auto nu2 = oracle::random_histogram(2, rng, 0.05);
    const auto c22 = oracle::random_cost(2, 2, rng);
    CHECK(exact_ot_solve(mu2, nu2, c22).loss ==
          doctest::Approx(oracle::grid_ot_2x2(mu2, nu2, c22)).epsilon(5e-4));

    const auto nu3 = oracle::random_histogram(3, rng, 0.05);
    const auto c23 = oracle::random_cost(2, 3, rng);
    CHECK(exact_ot_solve(mu2, nu3, c23).loss ==
          doctest::Approx(oracle::grid_ot_2x3(mu2, nu3, c23)).epsilon(5e-3));
  }
}

TEST_CASE("exact solver plans are feasible vertices below any entropic plan") {
  Rng rng(505);
  for (int trial = 0; trial < 6; ++trial) {
    const int rows = 2 + static_cast<int>(rng.bounded(7));
    const int cols = 2 + static_cast<int>(rng.bounded(7));
    const auto mu = oracle::random_histogram(rows, rng);
    const auto nu = oracle::random_histogram(cols, rng);
    const auto cost = oracle::random_cost(rows, cols, rng);
    const auto exact = exact_ot_solve(mu, nu, cost);

    CHECK((exact.plan.coupling.array() >= 0.0).all());
    CHECK(max_marginal_residual(exact) <= 1e-9);
    CHECK(exact.converged);
    CHECK((exact.u.array() > 0.0).all());

    // the entropic plan is feasible, so its cost upper-bounds the optimum
    const auto entropic = sinkhorn_solve(mu, nu, cost, tight_config(50));
    CHECK(exact.loss <= entropic.loss + 1e-6);
  }
}

TEST_CASE("exact solver handles degenerate ties by loss, not plan") {
  const Histogram mu{Vector{{0.5, 0.5}}, {}};
  const CostMatrix flat{Matrix::Constant(2, 2, 0.25), {}, {}};
  CHECK(exact_ot_solve(mu, mu, flat).loss == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("exact solver enforces its size guard") {
  Rng rng(3);
  const auto mu = oracle::random_histogram(9, rng);
  const auto nu = oracle::random_histogram(9, rng);
  const auto cost = oracle::random_cost(9, 9, rng);
  CHECK_THROWS_AS(exact_ot_solve(mu, nu, cost), InstanceTooLarge);
}

TEST_CASE("plan entropy follows the summation convention") {
  TransportPlan one_hot;
  one_hot.coupling = Matrix{{1.0, 0.0}, {0.0, 0.0}};
  CHECK(plan_entropy(one_hot) == doctest::Approx(0.0).scale(1).epsilon(1e-15));

  TransportPlan uniform;
  uniform.coupling = Matrix::Constant(2, 2, 0.25);
  CHECK(plan_entropy(uniform) == doctest::Approx(-1.3862944).epsilon(1e-6));

  TransportPlan lopsided;
  lopsided.coupling = Matrix{{0.3, 0.2}, {0.0, 0.5}};
  // direct summation: 0.3 log 0.3 + 0.2 log 0.2 + 0.5 log 0.5
  const double direct =
      0.3 * std::log(0.3) + 0.2 * std::log(0.2) + 0.5 * std::log(0.5);
  CHECK(plan_entropy(lopsided) == doctest::Approx(direct).epsilon(1e-12));
  CHECK(plan_entropy(lopsided) == doctest::Approx(-1.0296).epsilon(1e-4));
}

TEST_CASE("solver core is scalar-generic") {
  // float instantiation compiles and stays in the same ballpark
  HistogramT<float> mu{VectorX<float>{{0.5f, 0.5f}}, {}};
  HistogramT<float> nu{VectorX<float>{{0.3f, 0.7f}}, {}};
  CostMatrixT<float> cost{MatrixX<float>{{0.f, 1.f}, {1.f, 0.f}}, {}, {}};
  SinkhornConfigT<float> config{50.f, 10000, 1e-6f, 1e-6f};
  const auto solution = sinkhorn_solve(mu, nu, cost, config);
  CHECK(solution.loss == doctest::Approx(0.2).epsilon(0.05));
  CHECK(exact_ot_solve(mu, nu, cost).loss == doctest::Approx(0.2f).epsilon(1e-5));
}

TEST_SUITE_END();
