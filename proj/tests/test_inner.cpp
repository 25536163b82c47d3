#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "portopt/inner.hpp"

using namespace portopt;

namespace {

InnerProblem scalar_problem(double sigma, double c, double b, ConstraintSet K) {
  InnerProblem p;
  p.Sigma = MatrixXd::Constant(1, 1, sigma);
  p.c = VectorXd::Constant(1, c);
  p.bRisk = b;
  p.K = std::move(K);
  return p;
}

// Moderately conditioned random problem over a random constraint variant.
InnerProblem random_problem(std::mt19937_64& rng, int d) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  InnerProblem p;
  p.Sigma = MatrixXd::Identity(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) p.Sigma(i, j) += 0.3 * u(rng);
  }
  p.c = VectorXd::Zero(d);
  for (int i = 0; i < d; ++i) p.c[i] = 0.1 * u(rng);
  p.bRisk = (rng() % 2 == 0) ? 0.5 : -1.0;

  switch (rng() % 5) {
    case 0:
      p.K = ConstraintSet::full_space(d);
      break;
    case 1: {
      VectorXd lo(d), hi(d);
      for (int i = 0; i < d; ++i) {
        lo[i] = -0.5 + 0.3 * u(rng);
        hi[i] = 0.5 + 0.3 * u(rng);
      }
      p.K = ConstraintSet::box(lo, hi);
      break;
    }
    case 2:
      p.K = ConstraintSet::nonneg_orthant(d);
      break;
    case 3: {
      MatrixXd V(2 * d + 2, d);
      for (Eigen::Index i = 0; i < V.rows(); ++i) {
        for (int j = 0; j < d; ++j) V(i, j) = u(rng);
      }
      p.K = ConstraintSet::polytope(V);
      break;
    }
    default: {
      if (d == 1) {
        p.K = ConstraintSet::nonneg_orthant(1);
      } else {
        std::vector<ConstraintSet> kids;
        kids.push_back(
            ConstraintSet::box(-VectorXd::Ones(1), VectorXd::Ones(1)));
        kids.push_back(ConstraintSet::nonneg_orthant(d - 1));
        p.K = ConstraintSet::product(std::move(kids));
      }
      break;
    }
  }
  return p;
}

}  // namespace

TEST_CASE("unconstrained Merton point") {
  const auto sol =
      solve_inner(scalar_problem(0.2, 0.04, 0.5, ConstraintSet::full_space(1)));
  CHECK(sol.piStar[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(sol.lambdaStar.norm() == 0.0);
  CHECK(sol.primalValue == doctest::Approx(0.04).epsilon(1e-12));
  CHECK(sol.dualValue == doctest::Approx(0.04).epsilon(1e-12));
}

TEST_CASE("box-constrained scalar case") {
  const auto K = ConstraintSet::box(VectorXd::Zero(1), VectorXd::Ones(1));
  const auto sol = solve_inner(scalar_problem(0.2, 0.04, 0.5, K), 1e-13);
  CHECK(sol.piStar[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(sol.lambdaStar[0] == doctest::Approx(-0.02).epsilon(1e-9));
  CHECK(sol.primalValue == doctest::Approx(0.03).epsilon(1e-10));
  CHECK(sol.dualValue == doctest::Approx(0.03).epsilon(1e-9));
  CHECK(std::abs(sol.slackness) <= 1e-10);
}

TEST_CASE("orthant KKT by hand") {
  InnerProblem p;
  p.Sigma = MatrixXd::Identity(2, 2);
  p.c = VectorXd::Zero(2);
  p.c << -0.05, 0.03;
  p.bRisk = 0.5;
  p.K = ConstraintSet::nonneg_orthant(2);
  const auto sol = solve_inner(p, 1e-13);
  CHECK(sol.piStar[0] == doctest::Approx(0.0).epsilon(1e-11));
  CHECK(sol.piStar[1] == doctest::Approx(0.06).epsilon(1e-11));
  CHECK(sol.lambdaStar[0] == doctest::Approx(0.05).epsilon(1e-11));
  CHECK(sol.lambdaStar[1] == doctest::Approx(0.0).epsilon(1e-11));
}

TEST_CASE("saddle identity and slackness on random problems") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = 1 + int(rng() % 5);
    const auto p = random_problem(rng, d);
    const auto sol = solve_inner(p, 1e-13);
    CHECK(std::abs(sol.dualValue - 2.0 * (1.0 - p.bRisk) * sol.primalValue) <=
          1e-9);
    CHECK(std::abs(sol.slackness) <= 1e-9);
    CHECK(p.K.contains(sol.piStar));
  }
}

TEST_CASE("full space forces a vanishing multiplier") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 1 + int(rng() % 5);
    auto p = random_problem(rng, d);
    p.K = ConstraintSet::full_space(d);
    const auto sol = solve_inner(p);
    CHECK(sol.lambdaStar.norm() <= 1e-10);
    const VectorXd closed =
        (1.0 / (1.0 - p.bRisk)) *
        (p.Sigma * p.Sigma.transpose()).ldlt().solve(p.c);
    CHECK((sol.piStar - closed).norm() <= 1e-12 * (1.0 + closed.norm()));
  }
}

TEST_CASE("shrinking the set shrinks the primal value") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 1 + int(rng() % 3);
    auto p = random_problem(rng, d);
    VectorXd lo(d), hi(d);
    for (int i = 0; i < d; ++i) {
      lo[i] = -1.0 + 0.2 * u(rng);
      hi[i] = 1.0 + 0.2 * u(rng);
    }
    p.K = ConstraintSet::box(lo, hi);
    const auto outer = solve_inner(p, 1e-12);
    auto pInner = p;
    pInner.K = ConstraintSet::box((lo.array() + 0.3).matrix().eval(),
                                  (hi.array() - 0.3).matrix().eval());
    const auto inner = solve_inner(pInner, 1e-12);
    CHECK(inner.primalValue <= outer.primalValue + 1e-10);
  }
}

TEST_CASE("brute force: box example within lattice resolution") {
  const auto K = ConstraintSet::box(VectorXd::Zero(1), VectorXd::Ones(1));
  const auto p = scalar_problem(0.2, 0.04, 0.5, K);
  const auto exact = solve_inner(p, 1e-13);
  const auto bf = brute_force_inner(p, 100000, 1.5);
  const double spacing = 3.0 / 99999;
  const double gradBound = 0.04 + 0.5 * 0.04 * 1.0;
  CHECK(std::abs(bf.primalValue - exact.primalValue) <= 2.0 * spacing * gradBound);
  CHECK(bf.primalValue <= exact.primalValue + 1e-12);
}

TEST_CASE("brute force: recovers the unconstrained optimum") {
  const auto p = scalar_problem(0.2, 0.04, 0.5, ConstraintSet::full_space(1));
  const auto bf = brute_force_inner(p, 100001, 5.0);
  CHECK(bf.piStar[0] == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("brute force: degenerate c = 0") {
  auto p = scalar_problem(0.2, 0.0, 0.5,
                          ConstraintSet::box(-VectorXd::Ones(1), VectorXd::Ones(1)));
  const auto bf = brute_force_inner(p, 10001, 1.0);
  CHECK(std::abs(bf.piStar[0]) <= 1e-3);
  CHECK(bf.primalValue == doctest::Approx(0.0).epsilon(1e-7));
}

TEST_CASE("brute force rejects d > 3") {
  InnerProblem p;
  p.Sigma = MatrixXd::Identity(4, 4);
  p.c = VectorXd::Zero(4);
  p.bRisk = 0.5;
  p.K = ConstraintSet::full_space(4);
  CHECK_THROWS_AS(brute_force_inner(p, 10, 1.0), std::invalid_argument);
}

TEST_CASE("oracle equivalence on random low-dim problems") {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + int(rng() % 2);
    const auto p = random_problem(rng, d);
    const auto exact = solve_inner(p, 1e-12);
    const double radius = 2.0;
    const int gridN = (d == 1) ? 100000 : 401;
    const auto bf = brute_force_inner(p, gridN, radius);
    const double spacing = 2.0 * radius / (gridN - 1);
    const MatrixXd Q = (1.0 - p.bRisk) * p.Sigma * p.Sigma.transpose();
    const double gradBound =
        p.c.cwiseAbs().maxCoeff() + (Q * VectorXd::Constant(d, radius)).cwiseAbs().maxCoeff();
    CHECK(bf.primalValue <= exact.primalValue + 1e-9);
    CHECK(bf.primalValue >=
          exact.primalValue - 2.0 * spacing * std::sqrt(double(d)) * gradBound -
              1e-9);
  }
}

TEST_CASE("invalid problems are rejected") {
  auto p = scalar_problem(0.2, 0.04, 0.0, ConstraintSet::full_space(1));
  CHECK_THROWS_AS(solve_inner(p), std::invalid_argument);
  p.bRisk = 1.5;
  CHECK_THROWS_AS(solve_inner(p), std::invalid_argument);
  p.bRisk = 0.5;
  p.K = ConstraintSet::full_space(2);
  CHECK_THROWS_AS(solve_inner(p), std::invalid_argument);
}
