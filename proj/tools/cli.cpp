// portfolio-dual: solve / simulate / verify pipelines for constrained CRRA
// portfolio problems. See README.md for config and artifact schemas.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>

#include "portopt/diagnostics.hpp"
#include "portopt/serialization.hpp"

namespace fs = std::filesystem;
using namespace portopt;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitBlowUp = 3;
constexpr int kExitSimulation = 4;
constexpr int kExitVerifyFail = 5;

struct Options {
  std::string configPath;
  std::string outDir;
  std::optional<uint64_t> seed;
  std::optional<long> paths;
  std::optional<int> steps;
  std::optional<int> threads;
  std::string faultInject;
};

[[noreturn]] void die(int code, const std::string& type, const std::string& message) {
  std::cerr << json{{"error", {{"code", code}, {"type", type}, {"message", message}}}}.dump()
            << "\n";
  std::exit(code);
}

ExperimentConfig load(const Options& opt) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(opt.configPath);
  } catch (const ConfigError& e) {
    die(kExitValidation, "config", e.what());
  }
  if (opt.seed) cfg.sim.seed = *opt.seed;
  if (opt.paths) cfg.sim.paths = *opt.paths;
  if (opt.steps) cfg.sim.steps = *opt.steps;
  if (opt.threads) {
    cfg.sim.threads = *opt.threads;
  } else if (const char* env = std::getenv("PORTFOLIO_DUAL_THREADS")) {
    try {
      cfg.sim.threads = std::stoi(env);
    } catch (const std::exception&) {
      die(kExitValidation, "config", "PORTFOLIO_DUAL_THREADS is not an integer");
    }
  }
  if (!opt.outDir.empty()) cfg.outputs = opt.outDir;

  const auto report = validate(cfg.market);
  if (!report.all_pass()) {
    std::string detail;
    for (const auto& c : report.checks) {
      if (!c.pass) detail += (detail.empty() ? "" : "; ") + c.name + ": " + c.detail;
    }
    die(kExitValidation, "market", detail);
  }
  std::error_code ec;
  fs::create_directories(cfg.outputs, ec);
  if (ec) die(kExitValidation, "io", "cannot create output directory " + cfg.outputs);
  return cfg;
}

RiccatiSolution solve_exponents(const ExperimentConfig& cfg) {
  try {
    return integrate(cfg.market, cfg.constraint, cfg.bRisk, cfg.market.T, cfg.riccatiSteps);
  } catch (const FiniteEscapeError& e) {
    die(kExitBlowUp, "blow-up", e.what());
  } catch (const std::exception& e) {
    die(kExitValidation, "solve", e.what());
  }
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) die(kExitValidation, "io", "cannot write " + path);
  out << j.dump(2) << "\n";
}

int cmd_solve(const Options& opt) {
  const auto cfg = load(opt);
  const auto sol = solve_exponents(cfg);
  const fs::path dir(cfg.outputs);
  write_riccati_csv((dir / "riccati.csv").string(), sol);
  write_policy_grid_csv((dir / "policy_grid.csv").string(), cfg.market, sol,
                        cfg.constraint, cfg.bRisk, cfg.grid);
  write_json((dir / "summary.json").string(), summary_json(cfg, sol));
  std::cout << "solve: wrote riccati.csv, policy_grid.csv, summary.json to "
            << cfg.outputs << "\n";
  return 0;
}

int cmd_simulate(const Options& opt) {
  const auto cfg = load(opt);
  const auto sol = solve_exponents(cfg);
  const auto policy =
      make_policy_table(cfg.market, sol, cfg.constraint, cfg.bRisk, cfg.sim.steps);
  SimResult res;
  try {
    res = simulate_wealth(cfg.market, policy, cfg.bRisk, cfg.v0, cfg.sim);
  } catch (const std::invalid_argument& e) {
    die(kExitValidation, "sim-config", e.what());
  } catch (const std::exception& e) {
    die(kExitSimulation, "simulation", e.what());
  }
  const double target = value(sol, cfg.bRisk, 0.0, cfg.v0, cfg.market.z0);
  const json j = sim_json(res, target);
  write_json((fs::path(cfg.outputs) / "sim.json").string(), j);
  std::cout << "simulate: meanUtility = " << res.meanUtility
            << " (target " << target << ", z = " << j.at("zScore").get<double>()
            << "), wrote sim.json to " << cfg.outputs << "\n";
  return 0;
}

int cmd_verify(const Options& opt) {
  const auto cfg = load(opt);
  const auto& model = cfg.market;
  const auto& K = cfg.constraint;

  // The affinity probe gates everything else: without separability the
  // exponent ansatz (and hence the ODE solve) is meaningless.
  const auto eas = eas_probe(model, K, cfg.bRisk, 64, cfg.sim.seed + 2);
  if (!eas.pass) {
    json out{{"schema", "verify-v1"},
             {"constraint", constraint_to_json(K)},
             {"checks", json::array({eas_json(eas)})},
             {"pass", false}};
    write_json((fs::path(cfg.outputs) / "verify.json").string(), out);
    std::cout << "FAIL eas_probe (" << eas.failed << ")\n";
    std::cerr << json{{"error",
                       {{"code", kExitVerifyFail},
                        {"type", "verify"},
                        {"message", "affinity probe failed: " + eas.failed}}}}
                     .dump()
              << "\n";
    return kExitVerifyFail;
  }

  auto sol = solve_exponents(cfg);
  if (!opt.faultInject.empty()) {
    const std::string prefix = "a-shift=";
    if (opt.faultInject.rfind(prefix, 0) != 0) {
      die(kExitValidation, "cli", "unknown fault injection \"" + opt.faultInject + "\"");
    }
    double shift = 0.0;
    try {
      shift = std::stod(opt.faultInject.substr(prefix.size()));
    } catch (const std::exception&) {
      die(kExitValidation, "cli", "bad a-shift value");
    }
    sol = with_shifted_a(sol, shift);
  }

  json checks = json::array();
  bool allPass = true;
  const auto record = [&](const json& j) {
    checks.push_back(j);
    allPass = allPass && j.at("pass").get<bool>();
  };
  record(eas_json(eas));

  try {
    record(residual_json(
        hjb_residual(model, K, cfg.bRisk, sol, random_states(model, 100, cfg.sim.seed))));
    record(slackness_json(slackness_sweep(model, K, cfg.bRisk, sol, 1000, cfg.sim.seed + 1)));

    // Multipliers along the ray through lambda*(0); all stay admissible
    // because the support function is positively homogeneous.
    const auto pt0 = evaluate(model, sol, K, cfg.bRisk, 0.0, model.z0);
    std::mt19937_64 rng(cfg.sim.seed + 3);
    std::uniform_real_distribution<double> uni(0.0, 2.0);
    std::vector<VectorXd> duals;
    for (double f : {1.0, 0.0, 0.5, 1.5, uni(rng)}) {
      duals.push_back((f * pt0.lambdaStar).eval());
    }
    record(duality_json(
        weak_duality_check(model, K, cfg.bRisk, sol, duals, cfg.v0, cfg.sim)));

    std::vector<VectorXd> strategies{pt0.piStar};
    std::normal_distribution<double> gauss(0.0, 0.5);
    for (int i = 0; i < 8; ++i) {
      VectorXd x = pt0.piStar;
      for (long k = 0; k < x.size(); ++k) x[k] += gauss(rng);
      strategies.push_back(K.project(x));
    }
    record(dominance_json(
        dominance_check(model, K, cfg.bRisk, sol, strategies, cfg.v0, cfg.sim)));
  } catch (const std::exception& e) {
    die(kExitSimulation, "verify", e.what());
  }

  json out{{"schema", "verify-v1"},
           {"constraint", constraint_to_json(K)},
           {"checks", checks},
           {"pass", allPass}};
  write_json((fs::path(cfg.outputs) / "verify.json").string(), out);
  for (const auto& c : checks) {
    std::cout << (c.at("pass").get<bool>() ? "PASS " : "FAIL ")
              << c.at("name").get<std::string>() << "\n";
  }
  if (!allPass) {
    std::cerr << json{{"error",
                       {{"code", kExitVerifyFail},
                        {"type", "verify"},
                        {"message", "one or more checks failed"}}}}
                     .dump()
              << "\n";
    return kExitVerifyFail;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained CRRA portfolio optimization via dual HJBI exponents"};
  app.require_subcommand(1);

  Options opt;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.configPath, "experiment config JSON")->required();
    sub->add_option("--out", opt.outDir, "output directory (overrides config)");
    sub->add_option("--seed", opt.seed, "simulation seed override");
    sub->add_option("--paths", opt.paths, "path count override");
    sub->add_option("--steps", opt.steps, "time step override");
    sub->add_option("--threads", opt.threads, "worker thread override");
  };

  auto* solve = app.add_subcommand("solve", "integrate exponents, tabulate policy");
  add_common(solve);
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo run under the candidate policy");
  add_common(simulate);
  auto* verify = app.add_subcommand("verify", "residual / duality / dominance battery");
  add_common(verify);
  verify->add_option("--fault-inject", opt.faultInject,
                     "perturb the solution before checking, e.g. a-shift=0.01");

  CLI11_PARSE(app, argc, argv);

  if (solve->parsed()) return cmd_solve(opt);
  if (simulate->parsed()) return cmd_simulate(opt);
  return cmd_verify(opt);
}
