#pragma once

#include <utility>
#include <vector>

#include "portopt/montecarlo.hpp"
#include "portopt/policy.hpp"
#include "portopt/riccati.hpp"

namespace portopt {

using StatePoint = std::pair<double, VectorXd>;  // (t, z)

/// Uniform random states in [0, T) x (a market-appropriate z-range).
std::vector<StatePoint> random_states(const MarketModel& model, int n,
                                      uint64_t seed);

struct ResidualReport {
  std::vector<StatePoint> points;
  std::vector<double> residual;  // primal form, relative to |G|
  double maxAbsRel = 0.0;
  double maxPrimalDualGap = 0.0;  // max |primal form - dual form|
  double threshold = 0.0;
  bool pass = false;
};

/// PDE residual of the value ansatz at each state, evaluated at v = 1 and
/// divided by |G|. The optimized term is computed once through solve_inner
/// and inserted in both its primal and dual representations; the report
/// carries the worst disagreement between the two.
ResidualReport hjb_residual(const MarketModel& model, const ConstraintSet& K,
                            double bRisk, const RiccatiSolution& sol,
                            const std::vector<StatePoint>& points,
                            double threshold = 1e-6);

struct DominanceEntry {
  VectorXd pi;
  double meanUtility = 0.0;
  double stdError = 0.0;
  double excess = 0.0;  // meanUtility - reference mean
  bool dominates = false;
};

struct DominanceReport {
  double refUtility = 0.0;
  double refStdError = 0.0;
  std::vector<DominanceEntry> entries;
  bool pass = false;  // no strategy beats the candidate by 3 combined SE
};

/// Common-random-numbers comparison of constant strategies against the
/// feedback candidate from sol. Every strategy must lie in K.
DominanceReport dominance_check(const MarketModel& model,
                                const ConstraintSet& K, double bRisk,
                                const RiccatiSolution& sol,
                                const std::vector<VectorXd>& strategies,
                                double v0, const SimConfig& cfg);

struct DualityEntry {
  VectorXd lambda;
  double dualEstimate = 0.0;
  double stdError = 0.0;
  bool holds = false;
};

struct DualityReport {
  double primalEstimate = 0.0;
  double primalStdError = 0.0;
  std::vector<DualityEntry> entries;
  bool pass = false;
};

/// For each constant multiplier lambda, simulates the tilted wealth under the
/// lambda-shifted unconstrained maximizer and checks the upper-bound
/// inequality dualEstimate >= primalEstimate - 3 SE. Multipliers with
/// infinite support are rejected.
DualityReport weak_duality_check(const MarketModel& model,
                                 const ConstraintSet& K, double bRisk,
                                 const RiccatiSolution& sol,
                                 const std::vector<VectorXd>& duals, double v0,
                                 const SimConfig& cfg);

struct SlacknessReport {
  int points = 0;
  double maxAbs = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

/// Max |delta_K(lambda*) + pi*'lambda*| over random states.
SlacknessReport slackness_sweep(const MarketModel& model,
                                const ConstraintSet& K, double bRisk,
                                const RiccatiSolution& sol, int nStates,
                                uint64_t seed, double threshold = 1e-8);

}  // namespace portopt
