#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>

#include "portopt/constraints.hpp"
#include "portopt/markets.hpp"
#include "portopt/policy.hpp"

namespace portopt {

enum class Scheme { EulerLog, FullTruncationCIR };

struct SimConfig {
  long paths = 10000;
  int steps = 252;
  uint64_t seed = 1;
  Scheme scheme = Scheme::EulerLog;
  bool antithetic = false;
  int threads = 1;
};

struct SimResult {
  double meanUtility = 0.0;
  double stdError = 0.0;
  double meanTerminalWealth = 0.0;
  double truncationFraction = 0.0;  // CIR factor clamping rate
  long pathCount = 0;
};

/// Feedback allocation pi(t, v, z).
using PolicyFn = std::function<VectorXd(double, double, const VectorXd&)>;
/// Dual control lambda(t, z).
using DualFn = std::function<VectorXd(double, const VectorXd&)>;

class SimulationError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class InadmissibleDualError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Log-Euler wealth paths under the given policy. Deterministic in
/// (model, policy, v0, cfg) regardless of cfg.threads.
SimResult simulate_wealth(const MarketModel& model, const PolicyFn& policy,
                          double bRisk, double v0, const SimConfig& cfg);

/// Dual-tilted wealth V_lambda = V exp(int lambda'pi + delta_K(lambda) dt),
/// tilt accumulated by the trapezoidal rule. lambda == 0 reproduces
/// simulate_wealth bit for bit.
SimResult simulate_dual_wealth(const MarketModel& model, const PolicyFn& policy,
                               const DualFn& dual, const ConstraintSet& K,
                               double bRisk, double v0, const SimConfig& cfg);

/// Time-tabulated optimal policy pi*(t): the feedback control is independent
/// of z in all supported markets, so a per-step table plus linear
/// interpolation reproduces it cheaply inside path loops.
PolicyFn make_policy_table(const MarketModel& model, const RiccatiSolution& sol,
                           const ConstraintSet& K, double bRisk, int steps);

/// Same tabulation for the optimal multiplier lambda*(t), evaluated at z0.
DualFn make_dual_table(const MarketModel& model, const RiccatiSolution& sol,
                       const ConstraintSet& K, double bRisk, int steps);

}  // namespace portopt
