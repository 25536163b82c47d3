#pragma once

#include "portopt/constraints.hpp"
#include "portopt/inner.hpp"
#include "portopt/markets.hpp"
#include "portopt/riccati.hpp"

namespace portopt {

struct PolicyPoint {
  VectorXd piStar;
  VectorXd lambdaStar;
  double G = 0.0;
  double deltaK = 0.0;  // delta_K(lambda*)
  double slackness = 0.0;
  double t = 0.0;
  VectorXd z;
};

/// Candidate optimal feedback control and value at one state. The wealth
/// argument only scales G; the controls depend on (t, z) alone.
PolicyPoint evaluate(const MarketModel& model, const RiccatiSolution& sol,
                     const ConstraintSet& K, double bRisk, double t,
                     const VectorXd& z, double v = 1.0);

/// G(t, v, z) = (1/b) v^b exp(A(T-t) + B(T-t)'z).
double value(const RiccatiSolution& sol, double bRisk, double t, double v,
             const VectorXd& z);

/// The effective inner problem at (t, z): Sigma(t, z) and the drift
/// c = mu - r1 + (SigmaZ rho Sigma')'B(T-t). Shared by policy, residual and
/// probe code.
InnerProblem inner_problem_at(const MarketModel& model,
                              const RiccatiSolution& sol,
                              const ConstraintSet& K, double bRisk, double t,
                              const VectorXd& z);

}  // namespace portopt
