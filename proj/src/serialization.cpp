#include "portopt/serialization.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace portopt {

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ConfigError(where + ": " + what);
}

const json& need(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) fail(where, std::string("missing \"") + key + "\"");
  return j.at(key);
}

double num(const json& j, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  return j.get<double>();
}

/// Box bounds accept the string sentinels "inf" / "-inf".
double bound(const json& j, const std::string& where) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    fail(where, "expected a number, \"inf\" or \"-inf\"");
  }
  return num(j, where);
}

VectorXd vec(const json& j, const std::string& where) {
  if (!j.is_array()) fail(where, "expected an array");
  VectorXd out(j.size());
  for (size_t i = 0; i < j.size(); ++i) out[long(i)] = num(j[i], where);
  return out;
}

VectorXd bound_vec(const json& j, const std::string& where) {
  if (!j.is_array()) fail(where, "expected an array");
  VectorXd out(j.size());
  for (size_t i = 0; i < j.size(); ++i) out[long(i)] = bound(j[i], where);
  return out;
}

MatrixXd mat(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) fail(where, "expected a non-empty 2-d array");
  const size_t cols = j[0].size();
  MatrixXd out(j.size(), cols);
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) fail(where, "ragged rows");
    for (size_t k = 0; k < cols; ++k) out(long(i), long(k)) = num(j[i][k], where);
  }
  return out;
}

ScalarTable scalar_table(const json& j, const std::string& where) {
  if (j.is_number()) return ScalarTable::constant(j.get<double>());
  ScalarTable tab;
  tab.t = vec(need(j, "t", where), where + ".t");
  tab.v = vec(need(j, "v", where), where + ".v");
  if (tab.t.size() != tab.v.size() || tab.t.size() < 1) fail(where, "t/v length mismatch");
  return tab;
}

VectorTable vector_table(const json& j, const std::string& where) {
  if (j.is_array()) return VectorTable::constant(vec(j, where));
  VectorTable tab;
  tab.t = vec(need(j, "t", where), where + ".t");
  tab.v = mat(need(j, "v", where), where + ".v").transpose();  // columns per node
  if (tab.t.size() != tab.v.cols() || tab.t.size() < 1) fail(where, "t/v length mismatch");
  return tab;
}

MatrixTable matrix_table(const json& j, const std::string& where) {
  if (j.is_array() && !j.empty() && j[0].is_array() && (j[0].empty() || j[0][0].is_number())) {
    return MatrixTable::constant(mat(j, where));
  }
  MatrixTable tab;
  tab.t = vec(need(j, "t", where), where + ".t");
  for (const auto& e : need(j, "v", where)) tab.v.push_back(mat(e, where + ".v"));
  if (size_t(tab.t.size()) != tab.v.size() || tab.v.empty()) fail(where, "t/v length mismatch");
  return tab;
}

std::string type_of(const json& j, const std::string& where) {
  const auto& t = need(j, "type", where);
  if (!t.is_string()) fail(where + ".type", "expected a string");
  return t.get<std::string>();
}

}  // namespace

ConstraintSet parse_constraint(const json& j) {
  const std::string where = "constraint";
  const std::string type = type_of(j, where);
  try {
    if (type == "fullspace") {
      return ConstraintSet::full_space(need(j, "dim", where).get<int>());
    }
    if (type == "box") {
      return ConstraintSet::box(bound_vec(need(j, "lower", where), where + ".lower"),
                                bound_vec(need(j, "upper", where), where + ".upper"));
    }
    if (type == "nonneg") {
      return ConstraintSet::nonneg_orthant(need(j, "dim", where).get<int>());
    }
    if (type == "polytope") {
      return ConstraintSet::polytope(mat(need(j, "vertices", where), where + ".vertices"));
    }
    if (type == "product") {
      std::vector<ConstraintSet> kids;
      for (const auto& e : need(j, "components", where)) kids.push_back(parse_constraint(e));
      return ConstraintSet::product(std::move(kids));
    }
  } catch (const std::invalid_argument& e) {
    fail(where, e.what());
  }
  fail(where, "unknown type \"" + type + "\"");
}

json constraint_to_json(const ConstraintSet& K) {
  using namespace constraint_detail;
  json j;
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, FullSpace>) {
          j = {{"type", "fullspace"}, {"dim", node.dim}};
        } else if constexpr (std::is_same_v<T, Box>) {
          json lo = json::array(), hi = json::array();
          for (long i = 0; i < node.lower.size(); ++i) {
            if (std::isinf(node.lower[i])) lo.push_back("-inf");
            else lo.push_back(node.lower[i]);
            if (std::isinf(node.upper[i])) hi.push_back("inf");
            else hi.push_back(node.upper[i]);
          }
          j = {{"type", "box"}, {"lower", lo}, {"upper", hi}};
        } else if constexpr (std::is_same_v<T, NonNegOrthant>) {
          j = {{"type", "nonneg"}, {"dim", node.dim}};
        } else if constexpr (std::is_same_v<T, PolytopeV>) {
          json verts = json::array();
          for (long r = 0; r < node.vertices.rows(); ++r) {
            json row = json::array();
            for (long c = 0; c < node.vertices.cols(); ++c) row.push_back(node.vertices(r, c));
            verts.push_back(row);
          }
          j = {{"type", "polytope"}, {"vertices", verts}};
        } else {
          json kids = json::array();
          for (const auto& k : node.children) kids.push_back(constraint_to_json(k));
          j = {{"type", "product"}, {"components", kids}};
        }
      },
      K.raw());
  return j;
}

MarketModel parse_market(const json& j, double T) {
  const std::string where = "market";
  const std::string type = type_of(j, where);
  if (type == "bs") {
    BSMarket m;
    m.r = scalar_table(need(j, "r", where), where + ".r");
    m.eta = vector_table(need(j, "eta", where), where + ".eta");
    m.sigma = matrix_table(need(j, "sigma", where), where + ".sigma");
    return {m, T, VectorXd::Zero(0)};
  }
  if (type == "cir") {
    CIRMarket m;
    for (const auto& e : need(j, "blockDims", where)) m.blockDims.push_back(e.get<int>());
    m.kappa = vec(need(j, "kappa", where), where + ".kappa");
    m.theta = vec(need(j, "theta", where), where + ".theta");
    m.sigmaZ = vec(need(j, "sigmaZ", where), where + ".sigmaZ");
    m.rConst = num(need(j, "r", where), where + ".r");
    for (const auto& e : need(j, "rho", where)) m.rho.push_back(vec(e, where + ".rho"));
    for (const auto& e : need(j, "eta", where)) m.eta.push_back(vec(e, where + ".eta"));
    for (const auto& e : need(j, "Sigma", where)) m.SigmaBlock.push_back(mat(e, where + ".Sigma"));
    const size_t mcount = m.blockDims.size();
    if (size_t(m.kappa.size()) != mcount || size_t(m.theta.size()) != mcount ||
        size_t(m.sigmaZ.size()) != mcount || m.rho.size() != mcount ||
        m.eta.size() != mcount || m.SigmaBlock.size() != mcount) {
      fail(where, "per-block array lengths disagree with blockDims");
    }
    return {m, T, vec(need(j, "z0", where), where + ".z0")};
  }
  if (type == "ou") {
    OUMarket m;
    m.w0 = num(need(j, "w0", where), where + ".w0");
    m.w1 = vec(need(j, "w1", where), where + ".w1");
    m.kappa = vec(need(j, "kappa", where), where + ".kappa");
    m.theta = vec(need(j, "theta", where), where + ".theta");
    m.sigmaMat = mat(need(j, "sigma", where), where + ".sigma");
    m.etaMPR = vec(need(j, "etaMPR", where), where + ".etaMPR");
    m.maturities = vec(need(j, "maturities", where), where + ".maturities");
    return {m, T, vec(need(j, "z0", where), where + ".z0")};
  }
  fail(where, "unknown type \"" + type + "\"");
}

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig cfg;
  const double T = num(need(j, "T", "config"), "config.T");
  if (!(T > 0.0)) fail("config.T", "must be positive");
  cfg.market = parse_market(need(j, "market", "config"), T);
  cfg.constraint = parse_constraint(need(j, "constraint", "config"));
  if (cfg.constraint.dim() != cfg.market.dim()) {
    fail("config", "constraint dimension does not match the market");
  }
  cfg.bRisk = num(need(j, "bRisk", "config"), "config.bRisk");
  if (!(cfg.bRisk < 1.0) || cfg.bRisk == 0.0) fail("config.bRisk", "must satisfy b < 1, b != 0");
  cfg.v0 = num(need(j, "v0", "config"), "config.v0");
  if (!(cfg.v0 > 0.0)) fail("config.v0", "must be positive");
  if (j.contains("riccatiSteps")) cfg.riccatiSteps = j.at("riccatiSteps").get<int>();
  if (cfg.riccatiSteps < 8) fail("config.riccatiSteps", "must be >= 8");

  cfg.sim.scheme = cfg.market.is_cir() ? Scheme::FullTruncationCIR : Scheme::EulerLog;
  if (j.contains("sim")) {
    const json& s = j.at("sim");
    if (s.contains("paths")) cfg.sim.paths = s.at("paths").get<long>();
    if (s.contains("steps")) cfg.sim.steps = s.at("steps").get<int>();
    if (s.contains("seed")) cfg.sim.seed = s.at("seed").get<uint64_t>();
    if (s.contains("antithetic")) cfg.sim.antithetic = s.at("antithetic").get<bool>();
    if (s.contains("threads")) cfg.sim.threads = s.at("threads").get<int>();
    if (s.contains("scheme")) {
      const auto name = s.at("scheme").get<std::string>();
      if (name == "euler-log") cfg.sim.scheme = Scheme::EulerLog;
      else if (name == "full-truncation") cfg.sim.scheme = Scheme::FullTruncationCIR;
      else fail("config.sim.scheme", "unknown scheme \"" + name + "\"");
    }
  }
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    if (g.contains("tPoints")) cfg.grid.tPoints = g.at("tPoints").get<int>();
    if (g.contains("zPoints")) cfg.grid.zPoints = g.at("zPoints").get<int>();
    if (g.contains("zMin")) cfg.grid.zMin = vec(g.at("zMin"), "config.grid.zMin");
    if (g.contains("zMax")) cfg.grid.zMax = vec(g.at("zMax"), "config.grid.zMax");
    if (cfg.grid.tPoints < 2) fail("config.grid.tPoints", "must be >= 2");
    if (cfg.grid.zPoints < 1) fail("config.grid.zPoints", "must be >= 1");
  }
  if (j.contains("outputs")) cfg.outputs = j.at("outputs").get<std::string>();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  try {
    return parse_config(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << std::setprecision(17);
  return out;
}

}  // namespace

void write_riccati_csv(const std::string& path, const RiccatiSolution& sol) {
  auto out = open_out(path);
  out << "# schema: riccati-v1\n";
  out << "tau,A";
  for (int i = 0; i < sol.factors(); ++i) out << ",B" << i + 1;
  out << "\n";
  for (long k = 0; k < sol.tauGrid.size(); ++k) {
    out << sol.tauGrid[k] << "," << sol.A[k];
    for (int i = 0; i < sol.factors(); ++i) out << "," << sol.B(i, k);
    out << "\n";
  }
}

void write_policy_grid_csv(const std::string& path, const MarketModel& model,
                           const RiccatiSolution& sol, const ConstraintSet& K,
                           double bRisk, const GridSpec& grid) {
  const int m = model.factors();
  const int d = model.dim();
  VectorXd zMin = grid.zMin, zMax = grid.zMax;
  if (zMin.size() != m || zMax.size() != m) {
    // Default band around z0; CIR grids must stay strictly positive.
    if (model.is_cir()) {
      zMin = 0.25 * model.z0;
      zMax = 2.0 * model.z0;
    } else {
      zMin = model.z0.array() - 0.05;
      zMax = model.z0.array() + 0.05;
    }
  }
  const int nz = m == 0 ? 1 : grid.zPoints;

  auto out = open_out(path);
  out << "# schema: policy-grid-v1\n";
  out << "t";
  for (int i = 0; i < m; ++i) out << ",z" << i + 1;
  for (int i = 0; i < d; ++i) out << ",pi" << i + 1;
  for (int i = 0; i < d; ++i) out << ",lambda" << i + 1;
  out << ",G,deltaK,slackness\n";

  for (int it = 0; it < grid.tPoints; ++it) {
    const double t = model.T * it / (grid.tPoints - 1);
    for (int iz = 0; iz < nz; ++iz) {
      // Diagonal sweep through the z-box; factors move together.
      const double w = nz == 1 ? 0.0 : double(iz) / (nz - 1);
      const VectorXd z = m == 0 ? VectorXd(0) : (zMin + w * (zMax - zMin)).eval();
      const auto pt = evaluate(model, sol, K, bRisk, t, z);
      out << t;
      for (int i = 0; i < m; ++i) out << "," << z[i];
      for (int i = 0; i < d; ++i) out << "," << pt.piStar[i];
      for (int i = 0; i < d; ++i) out << "," << pt.lambdaStar[i];
      out << "," << pt.G << "," << pt.deltaK << "," << pt.slackness << "\n";
    }
  }
}

json summary_json(const ExperimentConfig& cfg, const RiccatiSolution& sol) {
  const double T = sol.horizon();
  json bT = json::array();
  const VectorXd B = sol.B_at(T);
  for (long i = 0; i < B.size(); ++i) bT.push_back(B[i]);
  return json{{"schema", "summary-v1"},
              {"T", T},
              {"bRisk", cfg.bRisk},
              {"v0", cfg.v0},
              {"A_T", sol.A_at(T)},
              {"B_T", bT},
              {"value", value(sol, cfg.bRisk, 0.0, cfg.v0, cfg.market.z0)},
              {"warnings", sol.warnings}};
}

json sim_json(const SimResult& res, double target) {
  const double z = res.stdError > 0.0
                       ? std::abs(res.meanUtility - target) / res.stdError
                       : (res.meanUtility == target ? 0.0 : kInf);
  return json{{"schema", "sim-v1"},
              {"meanUtility", res.meanUtility},
              {"stdError", res.stdError},
              {"meanTerminalWealth", res.meanTerminalWealth},
              {"truncationFraction", res.truncationFraction},
              {"pathCount", res.pathCount},
              {"target", target},
              {"zScore", z}};
}

json residual_json(const ResidualReport& rep) {
  return json{{"name", "hjb_residual"},
              {"points", rep.points.size()},
              {"maxAbsRel", rep.maxAbsRel},
              {"maxPrimalDualGap", rep.maxPrimalDualGap},
              {"threshold", rep.threshold},
              {"pass", rep.pass}};
}

json dominance_json(const DominanceReport& rep) {
  double worst = -kInf;
  for (const auto& e : rep.entries) worst = std::max(worst, e.excess);
  return json{{"name", "dominance"},
              {"refUtility", rep.refUtility},
              {"refStdError", rep.refStdError},
              {"strategies", rep.entries.size()},
              {"worstExcess", rep.entries.empty() ? 0.0 : worst},
              {"pass", rep.pass}};
}

json duality_json(const DualityReport& rep) {
  json entries = json::array();
  for (const auto& e : rep.entries) {
    entries.push_back(json{{"dualEstimate", e.dualEstimate},
                           {"stdError", e.stdError},
                           {"holds", e.holds}});
  }
  return json{{"name", "weak_duality"},
              {"primalEstimate", rep.primalEstimate},
              {"primalStdError", rep.primalStdError},
              {"entries", entries},
              {"pass", rep.pass}};
}

json slackness_json(const SlacknessReport& rep) {
  return json{{"name", "slackness"},
              {"points", rep.points},
              {"maxAbs", rep.maxAbs},
              {"threshold", rep.threshold},
              {"pass", rep.pass}};
}

json eas_json(const EASReport& rep) {
  json q = json::array();
  for (size_t i = 0; i < rep.quantity.size(); ++i) {
    q.push_back(json{{"quantity", rep.quantity[i]},
                     {"maxSecondDiff", rep.maxSecondDiff[i]}});
  }
  return json{{"name", "eas_probe"},
              {"quantities", q},
              {"failed", rep.failed},
              {"pass", rep.pass}};
}

}  // namespace portopt
