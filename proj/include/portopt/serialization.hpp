#pragma once

#include <json.hpp>
#include <string>

#include "portopt/diagnostics.hpp"
#include "portopt/montecarlo.hpp"

namespace portopt {

using nlohmann::json;

class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Grid on which cmd_solve tabulates the policy. z ranges default to a band
/// around z0 (CIR grids stay positive).
struct GridSpec {
  int tPoints = 21;
  int zPoints = 5;
  VectorXd zMin;  // empty = derive from the market
  VectorXd zMax;
};

struct ExperimentConfig {
  MarketModel market = MarketModel{BSMarket{}, 1.0, VectorXd::Zero(0)};
  ConstraintSet constraint = ConstraintSet::full_space(1);
  double bRisk = 0.5;
  double v0 = 1.0;
  int riccatiSteps = 512;
  SimConfig sim;
  GridSpec grid;
  std::string outputs = ".";
};

ConstraintSet parse_constraint(const json& j);
json constraint_to_json(const ConstraintSet& K);

MarketModel parse_market(const json& j, double T);

/// Whole-experiment parse; throws ConfigError with a path-qualified message
/// on any structural or semantic problem.
ExperimentConfig parse_config(const json& j);
ExperimentConfig load_config(const std::string& path);

void write_riccati_csv(const std::string& path, const RiccatiSolution& sol);
void write_policy_grid_csv(const std::string& path, const MarketModel& model,
                           const RiccatiSolution& sol, const ConstraintSet& K,
                           double bRisk, const GridSpec& grid);

json summary_json(const ExperimentConfig& cfg, const RiccatiSolution& sol);
json sim_json(const SimResult& res, double target);

json residual_json(const ResidualReport& rep);
json dominance_json(const DominanceReport& rep);
json duality_json(const DualityReport& rep);
json slackness_json(const SlacknessReport& rep);
json eas_json(const EASReport& rep);

}  // namespace portopt
