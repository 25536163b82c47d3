#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "portopt/constraints.hpp"

namespace portopt {

/// Pointwise constrained quadratic problem sitting inside the HJB right-hand
/// side: maximize h(pi) = c'pi - 0.5(1-b)||Sigma'pi||^2 over pi in K.
struct InnerProblem {
  MatrixXd Sigma;  // d x d, nonsingular
  VectorXd c;      // effective excess drift
  double bRisk = 0.5;
  ConstraintSet K = ConstraintSet::full_space(0);
};

struct InnerSolution {
  VectorXd piStar;
  VectorXd lambdaStar;
  double primalValue = 0.0;
  double dualValue = 0.0;   // 2(1-b) delta_K(lam*) + ||Sigma^{-1}(c+lam*)||^2
  double slackness = 0.0;   // delta_K(lam*) + pi*'lam*
  long iterations = 0;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& msg, VectorXd lastIterate)
      : std::runtime_error(msg), last(std::move(lastIterate)) {}
  VectorXd last;
};

class InternalConsistencyError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Projected gradient on the primal with step 1/L,
/// L = (1-b) lambda_max(Sigma Sigma'); the dual multiplier is recovered
/// algebraically as lam* = (1-b) Sigma Sigma' pi* - c.
InnerSolution solve_inner(const InnerProblem& p, double tol = 1e-10,
                          long maxIter = 100000);

/// Exhaustive lattice oracle over K intersected with [-radius, radius]^d.
/// Supports d <= 3 only.
InnerSolution brute_force_inner(const InnerProblem& p, int gridN,
                                double radius);

}  // namespace portopt
