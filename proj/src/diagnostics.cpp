#include "portopt/diagnostics.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace portopt {

std::vector<StatePoint> random_states(const MarketModel& model, int n,
                                      uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<StatePoint> out;
  out.reserve(size_t(n));
  for (int i = 0; i < n; ++i) {
    const double t = model.T * 0.999 * uni(rng);
    VectorXd z(model.factors());
    for (int j = 0; j < z.size(); ++j) {
      z[j] = model.is_cir() ? 0.01 + 0.3 * uni(rng) : -0.05 + 0.15 * uni(rng);
    }
    out.emplace_back(t, std::move(z));
  }
  return out;
}

ResidualReport hjb_residual(const MarketModel& model, const ConstraintSet& K,
                            double bRisk, const RiccatiSolution& sol,
                            const std::vector<StatePoint>& points,
                            double threshold) {
  ResidualReport rep;
  rep.points = points;
  rep.threshold = threshold;
  const double T = sol.horizon();
  for (const auto& [t, z] : points) {
    const double tau = T - t;
    const CoefficientFrame f = coeffs(model, t, z);
    const VectorXd B = sol.B_at(tau);

    double common = -(sol.A_slope_at(tau) + sol.B_slope_at(tau).dot(z)) +
                    bRisk * f.rShort;
    if (model.factors() > 0) {
      const MatrixXd SzSz = f.SigmaZ * f.SigmaZ.transpose();
      common += f.muZ.dot(B) + 0.5 * B.dot(SzSz * B);
    }

    const auto inner =
        solve_inner(inner_problem_at(model, sol, K, bRisk, t, z), 1e-12);
    const double primalForm = common + bRisk * inner.primalValue;
    const double dualForm =
        common + bRisk / (2.0 * (1.0 - bRisk)) * inner.dualValue;

    if (!std::isfinite(primalForm) || !std::isfinite(dualForm)) {
      std::ostringstream os;
      os << "non-finite residual at t = " << t;
      throw std::runtime_error(os.str());
    }
    rep.residual.push_back(primalForm);
    rep.maxAbsRel = std::max(rep.maxAbsRel, std::abs(primalForm));
    rep.maxPrimalDualGap =
        std::max(rep.maxPrimalDualGap, std::abs(primalForm - dualForm));
  }
  rep.pass = rep.maxAbsRel <= threshold;
  return rep;
}

DominanceReport dominance_check(const MarketModel& model,
                                const ConstraintSet& K, double bRisk,
                                const RiccatiSolution& sol,
                                const std::vector<VectorXd>& strategies,
                                double v0, const SimConfig& cfg) {
  for (const auto& pi : strategies) {
    if (!K.contains(pi)) {
      throw std::invalid_argument("dominance_check: infeasible strategy");
    }
  }
  const auto refPolicy = make_policy_table(model, sol, K, bRisk, cfg.steps);
  const auto ref = simulate_wealth(model, refPolicy, bRisk, v0, cfg);

  DominanceReport rep;
  rep.refUtility = ref.meanUtility;
  rep.refStdError = ref.stdError;
  rep.pass = true;
  for (const auto& pi : strategies) {
    const PolicyFn constant = [pi](double, double, const VectorXd&) {
      return pi;
    };
    const auto res = simulate_wealth(model, constant, bRisk, v0, cfg);
    DominanceEntry e;
    e.pi = pi;
    e.meanUtility = res.meanUtility;
    e.stdError = res.stdError;
    e.excess = res.meanUtility - ref.meanUtility;
    const double se =
        std::sqrt(ref.stdError * ref.stdError + res.stdError * res.stdError);
    e.dominates = e.excess > 3.0 * se;
    if (e.dominates) rep.pass = false;
    rep.entries.push_back(std::move(e));
  }
  return rep;
}

DualityReport weak_duality_check(const MarketModel& model,
                                 const ConstraintSet& K, double bRisk,
                                 const RiccatiSolution& sol,
                                 const std::vector<VectorXd>& duals, double v0,
                                 const SimConfig& cfg) {
  for (const auto& lam : duals) {
    if (!std::isfinite(K.support(lam))) {
      throw std::invalid_argument(
          "weak_duality_check: multiplier has infinite support");
    }
  }
  const auto refPolicy = make_policy_table(model, sol, K, bRisk, cfg.steps);
  const auto primal = simulate_wealth(model, refPolicy, bRisk, v0, cfg);

  DualityReport rep;
  rep.primalEstimate = primal.meanUtility;
  rep.primalStdError = primal.stdError;
  rep.pass = true;
  const double T = sol.horizon();
  for (const auto& lam : duals) {
    // The lambda-shifted unconstrained maximizer, tabulated over the step
    // grid; it depends on t only through B.
    MatrixXd table(model.dim(), cfg.steps + 1);
    for (int k = 0; k <= cfg.steps; ++k) {
      const double t = T * k / cfg.steps;
      const auto p = inner_problem_at(model, sol, K, bRisk, t, model.z0);
      const MatrixXd SS = p.Sigma * p.Sigma.transpose();
      table.col(k) = SS.llt().solve((p.c + lam) / (1.0 - bRisk));
    }
    const int steps = cfg.steps;
    const PolicyFn piLam = [table, T, steps](double t, double,
                                             const VectorXd&) {
      const double s = std::clamp(t / T, 0.0, 1.0) * steps;
      const int k = std::min(int(s), steps - 1);
      const double w = s - k;
      if (w < 1e-9) return table.col(k).eval();
      if (w > 1.0 - 1e-9) return table.col(k + 1).eval();
      return ((1.0 - w) * table.col(k) + w * table.col(k + 1)).eval();
    };
    const DualFn dualFn = [lam](double, const VectorXd&) { return lam; };
    const auto res =
        simulate_dual_wealth(model, piLam, dualFn, K, bRisk, v0, cfg);

    DualityEntry e;
    e.lambda = lam;
    e.dualEstimate = res.meanUtility;
    e.stdError = res.stdError;
    const double se = std::sqrt(primal.stdError * primal.stdError +
                                res.stdError * res.stdError);
    e.holds = res.meanUtility >= primal.meanUtility - 3.0 * se;
    if (!e.holds) rep.pass = false;
    rep.entries.push_back(std::move(e));
  }
  return rep;
}

SlacknessReport slackness_sweep(const MarketModel& model,
                                const ConstraintSet& K, double bRisk,
                                const RiccatiSolution& sol, int nStates,
                                uint64_t seed, double threshold) {
  SlacknessReport rep;
  rep.points = nStates;
  rep.threshold = threshold;
  for (const auto& [t, z] : random_states(model, nStates, seed)) {
    const auto pt = evaluate(model, sol, K, bRisk, t, z);
    rep.maxAbs = std::max(rep.maxAbs, std::abs(pt.slackness));
  }
  rep.pass = rep.maxAbs <= threshold;
  return rep;
}

}  // namespace portopt
