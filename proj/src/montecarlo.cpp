#include "portopt/montecarlo.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <thread>
#include <vector>

namespace portopt {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct PathAccum {
  double utility = 0.0;
  double wealth = 0.0;
  long truncCount = 0;
};

struct Engine {
  const MarketModel& model;
  const PolicyFn& policy;
  const DualFn* dual;  // nullptr for the primal simulation
  const ConstraintSet* K;
  double bRisk;
  double v0;
  SimConfig cfg;

  double dt = 0.0, sdt = 0.0;
  int m = 0, d = 0;

  // Per-node coefficient tables for the z-independent markets.
  std::vector<double> rNode;
  std::vector<VectorXd> excessNode;   // mu - r1 (BS) or Sigma eta (OU)
  std::vector<MatrixXd> sigmaNode;

  // CIR flattened block data.
  std::vector<int> blockOff;

  void prepare() {
    dt = model.T / cfg.steps;
    sdt = std::sqrt(dt);
    m = model.factors();
    d = model.dim();
    if (model.is_bs()) {
      const BSMarket& bs = model.bs();
      for (int k = 0; k <= cfg.steps; ++k) {
        const double t = k * dt;
        rNode.push_back(bs.r(t));
        excessNode.push_back(bs.eta(t));
        sigmaNode.push_back(bs.sigma(t));
      }
    } else if (model.is_ou()) {
      const OUMarket& ou = model.ou();
      for (int k = 0; k <= cfg.steps; ++k) {
        const MatrixXd S = bond_b_matrix(ou, k * dt).transpose() * ou.sigmaMat;
        excessNode.push_back(S * ou.etaMPR);
        sigmaNode.push_back(S);
      }
    } else {
      const CIRMarket& cir = model.cir();
      int off = 0;
      for (int di : cir.blockDims) {
        blockOff.push_back(off);
        off += di;
      }
    }
  }

  PathAccum run_path(long p) const {
    const uint64_t stream = cfg.antithetic ? uint64_t(p) / 2 : uint64_t(p);
    const double flip = (cfg.antithetic && (p % 2 == 1)) ? -1.0 : 1.0;
    std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(stream + 1)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto draw = [&]() { return flip * gauss(rng); };

    PathAccum acc;
    double lnV = std::log(v0);
    VectorXd z = model.z0;
    VectorXd zEff = z;
    VectorXd xiZ(m), xiI(d);
    double tilt0 = 0.0, tiltMid = 0.0, gPrev = 0.0;

    const auto dual_node = [&](int k, double V, const VectorXd& zArg,
                               const VectorXd& pi) {
      const VectorXd lam = (*dual)(k * dt, zArg);
      const double deltaK = K->support(lam);
      if (!std::isfinite(deltaK)) {
        std::ostringstream os;
        os << "inadmissible dual control (infinite support) at t = " << k * dt
           << ", path " << p;
        throw InadmissibleDualError(os.str());
      }
      (void)V;
      return lam.dot(pi) + deltaK;
    };

    for (int k = 0; k < cfg.steps; ++k) {
      const double t = k * dt;
      const double V = std::exp(lnV);

      double drift = 0.0, diffusion = 0.0;

      if (model.is_cir()) {
        const CIRMarket& cir = model.cir();
        for (int i = 0; i < m; ++i) {
          if (z[i] < 0.0) ++acc.truncCount;
          zEff[i] = std::max(z[i], 0.0);
        }
        const VectorXd pi = policy(t, V, zEff);
        if (dual) {
          const double g = dual_node(k, V, zEff, pi);
          if (k == 0) tilt0 = g;
          else tiltMid += g;
          gPrev = g;
        }
        drift = cir.rConst;
        for (int i = 0; i < m; ++i) {
          const int off = blockOff[size_t(i)];
          const int di = cir.blockDims[size_t(i)];
          const auto piB = pi.segment(off, di);
          const VectorXd sTp = cir.SigmaBlock[size_t(i)].transpose() * piB;
          const double zi = zEff[i];
          const double xz = draw();
          drift += zi * (cir.eta[size_t(i)].dot(piB) - 0.5 * sTp.squaredNorm());
          // Asset Brownians: W_j = rho_ij W^z_i + sqrt(1-rho_ij^2) What_j.
          double dW = 0.0;
          for (int j = 0; j < di; ++j) {
            const double rho = cir.rho[size_t(i)][j];
            dW += sTp[j] * (rho * xz + std::sqrt(1.0 - rho * rho) * draw());
          }
          diffusion += std::sqrt(zi) * sdt * dW;
          z[i] += cir.kappa[i] * (cir.theta[i] - zi) * dt +
                  cir.sigmaZ[i] * std::sqrt(zi) * sdt * xz;
        }
      } else if (model.is_ou()) {
        const OUMarket& ou = model.ou();
        const VectorXd pi = policy(t, V, z);
        if (dual) {
          const double g = dual_node(k, V, z, pi);
          if (k == 0) tilt0 = g;
          else tiltMid += g;
          gPrev = g;
        }
        const double r = ou.w0 + ou.w1.dot(z);
        const VectorXd sTp = sigmaNode[size_t(k)].transpose() * pi;
        for (int i = 0; i < m; ++i) xiZ[i] = draw();
        drift = r + excessNode[size_t(k)].dot(pi) - 0.5 * sTp.squaredNorm();
        diffusion = sdt * sTp.dot(xiZ);
        z += ou.kappa.cwiseProduct(ou.theta - z) * dt +
             ou.sigmaMat * (sdt * xiZ);
      } else {
        const VectorXd pi = policy(t, V, z);
        if (dual) {
          const double g = dual_node(k, V, z, pi);
          if (k == 0) tilt0 = g;
          else tiltMid += g;
          gPrev = g;
        }
        const VectorXd sTp = sigmaNode[size_t(k)].transpose() * pi;
        for (int j = 0; j < d; ++j) xiI[j] = draw();
        drift = rNode[size_t(k)] + excessNode[size_t(k)].dot(pi) -
                0.5 * sTp.squaredNorm();
        diffusion = sdt * sTp.dot(xiI);
      }

      lnV += drift * dt + diffusion;
      if (!std::isfinite(lnV) || (m > 0 && !z.allFinite())) {
        std::ostringstream os;
        os << "non-finite state at path " << p << ", step " << k;
        throw SimulationError(os.str());
      }
      (void)gPrev;
    }

    double wealth = std::exp(lnV);
    if (dual) {
      // Trapezoid closing node at t = T.
      VectorXd zT = z;
      if (model.is_cir()) zT = zT.cwiseMax(0.0);
      const VectorXd piT = policy(model.T, wealth, zT);
      const double gT = dual_node(cfg.steps, wealth, zT, piT);
      const double tilt = dt * (0.5 * tilt0 + tiltMid + 0.5 * gT);
      wealth *= std::exp(tilt);
    }
    acc.wealth = wealth;
    acc.utility = std::pow(wealth, bRisk) / bRisk;
    return acc;
  }
};

SimResult run(Engine& eng) {
  const SimConfig& cfg = eng.cfg;
  if (cfg.paths < 2) throw std::invalid_argument("simulate: paths < 2");
  if (cfg.steps < 1) throw std::invalid_argument("simulate: steps < 1");
  if (!(eng.v0 > 0.0)) throw std::invalid_argument("simulate: v0 <= 0");
  if (cfg.antithetic && cfg.paths % 2 != 0) {
    throw std::invalid_argument("simulate: antithetic needs an even path count");
  }
  if (eng.model.is_cir() && cfg.scheme != Scheme::FullTruncationCIR) {
    throw std::invalid_argument(
        "simulate: CIR factors require the full-truncation scheme");
  }
  if (!eng.model.is_cir() && cfg.scheme == Scheme::FullTruncationCIR) {
    throw std::invalid_argument(
        "simulate: full-truncation scheme only applies to CIR factors");
  }
  eng.prepare();

  std::vector<PathAccum> acc(size_t(cfg.paths));
  const int nThreads = std::max(1, cfg.threads);
  if (nThreads == 1) {
    for (long p = 0; p < cfg.paths; ++p) acc[size_t(p)] = eng.run_path(p);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors{size_t(nThreads)};
    const long chunk = (cfg.paths + nThreads - 1) / nThreads;
    for (int w = 0; w < nThreads; ++w) {
      pool.emplace_back([&, w]() {
        try {
          const long lo = w * chunk;
          const long hi = std::min(cfg.paths, lo + chunk);
          for (long p = lo; p < hi; ++p) acc[size_t(p)] = eng.run_path(p);
        } catch (...) {
          errors[size_t(w)] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  // Sequential, schedule-independent reduction.
  const long units = cfg.antithetic ? cfg.paths / 2 : cfg.paths;
  double sum = 0.0, sumsq = 0.0, sumWealth = 0.0;
  long trunc = 0;
  for (long u = 0; u < units; ++u) {
    double x;
    if (cfg.antithetic) {
      x = 0.5 * (acc[size_t(2 * u)].utility + acc[size_t(2 * u + 1)].utility);
    } else {
      x = acc[size_t(u)].utility;
    }
    sum += x;
    sumsq += x * x;
  }
  for (long p = 0; p < cfg.paths; ++p) {
    sumWealth += acc[size_t(p)].wealth;
    trunc += acc[size_t(p)].truncCount;
  }

  SimResult out;
  out.pathCount = cfg.paths;
  out.meanUtility = sum / double(units);
  const double var =
      std::max(0.0, (sumsq / double(units) - out.meanUtility * out.meanUtility) *
                        double(units) / double(units - 1));
  out.stdError = std::sqrt(var / double(units));
  out.meanTerminalWealth = sumWealth / double(cfg.paths);
  out.truncationFraction =
      eng.model.is_cir()
          ? double(trunc) / (double(cfg.paths) * cfg.steps * eng.model.factors())
          : 0.0;
  return out;
}

}  // namespace

SimResult simulate_wealth(const MarketModel& model, const PolicyFn& policy,
                          double bRisk, double v0, const SimConfig& cfg) {
  Engine eng{model, policy, nullptr, nullptr, bRisk, v0, cfg};
  return run(eng);
}

SimResult simulate_dual_wealth(const MarketModel& model, const PolicyFn& policy,
                               const DualFn& dual, const ConstraintSet& K,
                               double bRisk, double v0, const SimConfig& cfg) {
  Engine eng{model, policy, &dual, &K, bRisk, v0, cfg};
  return run(eng);
}

namespace {

std::function<VectorXd(double)> tabulate(
    const MarketModel& model, const RiccatiSolution& sol,
    const ConstraintSet& K, double bRisk, int steps, bool wantLambda) {
  const double T = sol.horizon();
  MatrixXd table(model.dim(), steps + 1);
  for (int k = 0; k <= steps; ++k) {
    const double t = T * k / steps;
    const auto pt = evaluate(model, sol, K, bRisk, t, model.z0);
    table.col(k) = wantLambda ? pt.lambdaStar : pt.piStar;
  }
  return [table, T, steps](double t) {
    const double s = std::clamp(t / T, 0.0, 1.0) * steps;
    const int k = std::min(int(s), steps - 1);
    const double w = s - k;
    // Snap to grid nodes so node-aligned queries reproduce them exactly.
    if (w < 1e-9) return table.col(k).eval();
    if (w > 1.0 - 1e-9) return table.col(k + 1).eval();
    return ((1.0 - w) * table.col(k) + w * table.col(k + 1)).eval();
  };
}

}  // namespace

PolicyFn make_policy_table(const MarketModel& model, const RiccatiSolution& sol,
                           const ConstraintSet& K, double bRisk, int steps) {
  auto fn = tabulate(model, sol, K, bRisk, steps, false);
  return [fn](double t, double, const VectorXd&) { return fn(t); };
}

DualFn make_dual_table(const MarketModel& model, const RiccatiSolution& sol,
                       const ConstraintSet& K, double bRisk, int steps) {
  auto fn = tabulate(model, sol, K, bRisk, steps, true);
  return [fn](double t, const VectorXd&) { return fn(t); };
}

}  // namespace portopt
