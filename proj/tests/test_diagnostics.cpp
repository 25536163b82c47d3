#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "portopt/diagnostics.hpp"

using namespace portopt;

namespace {

MarketModel bs_reference() {
  BSMarket bs;
  bs.r = ScalarTable::constant(0.02);
  bs.eta = VectorTable::constant(VectorXd::Constant(1, 0.04));
  bs.sigma = MatrixTable::constant(MatrixXd::Constant(1, 1, 0.2));
  return {bs, 1.0, VectorXd::Zero(0)};
}

MarketModel cir_reference() {
  CIRMarket m;
  m.blockDims = {1};
  m.kappa = VectorXd::Constant(1, 2.0);
  m.theta = VectorXd::Constant(1, 0.04);
  m.sigmaZ = VectorXd::Constant(1, 0.3);
  m.rConst = 0.02;
  m.rho = {VectorXd::Constant(1, -0.5)};
  m.eta = {VectorXd::Constant(1, 2.0)};
  m.SigmaBlock = {MatrixXd::Identity(1, 1)};
  return {m, 1.0, VectorXd::Constant(1, 0.04)};
}

MarketModel ou_two_factor() {
  OUMarket m;
  m.w0 = 0.01;
  m.w1 = VectorXd(2);
  m.w1 << 0.6, 0.4;
  m.kappa = VectorXd(2);
  m.kappa << 0.3, 0.8;
  m.theta = VectorXd(2);
  m.theta << 0.02, 0.03;
  m.sigmaMat = MatrixXd(2, 2);
  m.sigmaMat << 0.012, 0.0, 0.004, 0.010;
  m.etaMPR = VectorXd(2);
  m.etaMPR << -0.25, -0.1;
  m.maturities = VectorXd(2);
  m.maturities << 2.0, 3.0;
  return {m, 1.0, VectorXd::Constant(2, 0.025)};
}

ConstraintSet unit_box(int d) {
  return ConstraintSet::box(VectorXd::Zero(d), VectorXd::Ones(d));
}

}  // namespace

TEST_CASE("PDE residual vanishes for the BS box solution") {
  const auto model = bs_reference();
  const auto K = unit_box(1);
  const auto sol = integrate(model, K, 0.5, 1.0, 128);
  const auto pts = random_states(model, 100, 42);
  const auto rep = hjb_residual(model, K, 0.5, sol, pts);
  CHECK(rep.pass);
  CHECK(rep.maxAbsRel <= 1e-6);
  CHECK(rep.maxPrimalDualGap <= 1e-9);
  CHECK(rep.residual.size() == 100);
}

TEST_CASE("PDE residual passes for all three reference markets") {
  const auto run = [](const MarketModel& model, const ConstraintSet& K) {
    const auto sol = integrate(model, K, 0.5, model.T, 512);
    const auto rep =
        hjb_residual(model, K, 0.5, sol, random_states(model, 100, 7));
    CHECK(rep.maxAbsRel <= 1e-6);
    CHECK(rep.maxPrimalDualGap <= 1e-9);
  };
  run(bs_reference(), unit_box(1));
  run(cir_reference(), unit_box(1));
  run(ou_two_factor(), unit_box(2));
}

TEST_CASE("a tilted exponent trips the residual check") {
  const auto model = bs_reference();
  const auto K = unit_box(1);
  const auto sol = integrate(model, K, 0.5, 1.0, 128);
  const auto bad = with_shifted_a(sol, 0.01);
  const auto rep =
      hjb_residual(model, K, 0.5, bad, random_states(model, 100, 42));
  CHECK_FALSE(rep.pass);
  CHECK(rep.maxAbsRel == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("no constant BS strategy dominates the constrained optimum") {
  const auto model = bs_reference();
  const auto K = unit_box(1);
  const auto sol = integrate(model, K, 0.5, 1.0, 64);
  std::vector<VectorXd> grid;
  for (int i = 0; i <= 100; ++i) {
    grid.push_back(VectorXd::Constant(1, i / 100.0));
  }
  SimConfig cfg;
  cfg.paths = 4000;
  cfg.steps = 64;
  cfg.seed = 10;
  const auto rep = dominance_check(model, K, 0.5, sol, grid, 1.0, cfg);
  CHECK(rep.pass);
  CHECK(rep.entries.size() == 101);
  // pi* = 1 sits at the end of the grid; shared seeds make it an exact tie.
  CHECK(rep.entries.back().excess == 0.0);
}

TEST_CASE("no random OU constant dominates the candidate") {
  const auto model = ou_two_factor();
  const auto K = unit_box(2);
  const auto sol = integrate(model, K, 0.5, 1.0, 128);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<VectorXd> strategies;
  for (int i = 0; i < 21; ++i) {
    VectorXd pi(2);
    pi << uni(rng), uni(rng);
    strategies.push_back(pi);
  }
  SimConfig cfg;
  cfg.paths = 4000;
  cfg.steps = 64;
  cfg.seed = 17;
  const auto rep = dominance_check(model, K, 0.5, sol, strategies, 1.0, cfg);
  CHECK(rep.pass);
}

TEST_CASE("infeasible comparison strategies are rejected") {
  const auto model = bs_reference();
  const auto K = unit_box(1);
  const auto sol = integrate(model, K, 0.5, 1.0, 64);
  SimConfig cfg;
  cfg.paths = 100;
  cfg.steps = 16;
  std::vector<VectorXd> bad{VectorXd::Constant(1, 1.5)};
  CHECK_THROWS_AS((void)dominance_check(model, K, 0.5, sol, bad, 1.0, cfg),
                  std::invalid_argument);
}

TEST_CASE("weak duality holds at and away from the saddle point") {
  const auto model = bs_reference();
  const auto K = unit_box(1);
  const auto sol = integrate(model, K, 0.5, 1.0, 64);
  SimConfig cfg;
  cfg.paths = 20000;
  cfg.steps = 64;
  cfg.seed = 15;

  std::vector<VectorXd> duals;
  duals.push_back(VectorXd::Constant(1, -0.02));  // lambda*
  duals.push_back(VectorXd::Zero(1));
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> uni(-0.05, 0.05);
  for (int i = 0; i < 5; ++i) duals.push_back(VectorXd::Constant(1, uni(rng)));

  const auto rep = weak_duality_check(model, K, 0.5, sol, duals, 1.0, cfg);
  CHECK(rep.pass);
  for (const auto& e : rep.entries) CHECK(e.holds);
  // At lambda* the tilt vanishes and strong duality pins the two estimates.
  const auto& star = rep.entries.front();
  const double se = std::sqrt(rep.primalStdError * rep.primalStdError +
                              star.stdError * star.stdError);
  CHECK(std::abs(star.dualEstimate - rep.primalEstimate) <= 3.0 * se);
}

TEST_CASE("multipliers with infinite support are rejected") {
  const auto model = bs_reference();
  const auto K = ConstraintSet::nonneg_orthant(1);
  const auto sol = integrate(model, K, 0.5, 1.0, 64);
  SimConfig cfg;
  cfg.paths = 100;
  cfg.steps = 16;
  std::vector<VectorXd> duals{VectorXd::Constant(1, -0.01)};
  CHECK_THROWS_AS(
      (void)weak_duality_check(model, K, 0.5, sol, duals, 1.0, cfg),
      std::invalid_argument);
}

TEST_CASE("slackness sweep stays under the tolerance") {
  const auto runSweep = [](const MarketModel& model, const ConstraintSet& K) {
    const auto sol = integrate(model, K, 0.5, model.T, 128);
    const auto rep = slackness_sweep(model, K, 0.5, sol, 300, 23);
    CHECK(rep.pass);
    CHECK(rep.maxAbs <= 1e-8);
  };
  runSweep(bs_reference(), unit_box(1));
  runSweep(cir_reference(), unit_box(1));
  runSweep(ou_two_factor(), unit_box(2));
}
