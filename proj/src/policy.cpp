#include "portopt/policy.hpp"

#include <cmath>

namespace portopt {

InnerProblem inner_problem_at(const MarketModel& model,
                              const RiccatiSolution& sol,
                              const ConstraintSet& K, double bRisk, double t,
                              const VectorXd& z) {
  const double tau = sol.horizon() - t;
  const CoefficientFrame f = coeffs(model, t, z);
  InnerProblem p;
  p.Sigma = f.Sigma;
  p.c = f.mu - VectorXd::Constant(f.mu.size(), f.rShort);
  if (model.factors() > 0) {
    p.c += f.Sigma * f.rho.transpose() * f.SigmaZ.transpose() * sol.B_at(tau);
  }
  p.bRisk = bRisk;
  p.K = K;
  return p;
}

PolicyPoint evaluate(const MarketModel& model, const RiccatiSolution& sol,
                     const ConstraintSet& K, double bRisk, double t,
                     const VectorXd& z, double v) {
  const auto p = inner_problem_at(model, sol, K, bRisk, t, z);
  const auto inner = solve_inner(p, 1e-12);
  PolicyPoint out;
  out.piStar = inner.piStar;
  out.lambdaStar = inner.lambdaStar;
  out.deltaK = K.support(inner.lambdaStar);
  out.slackness = inner.slackness;
  out.G = value(sol, bRisk, t, v, z);
  out.t = t;
  out.z = z;
  return out;
}

double value(const RiccatiSolution& sol, double bRisk, double t, double v,
             const VectorXd& z) {
  if (!(v > 0.0)) throw std::domain_error("value: wealth must be positive");
  if (z.size() != sol.factors()) {
    throw std::invalid_argument("value: factor dimension mismatch");
  }
  const double tau = sol.horizon() - t;
  const double expo = sol.A_at(tau) + sol.B_at(tau).dot(z);
  return std::pow(v, bRisk) / bRisk * std::exp(expo);
}

}  // namespace portopt
