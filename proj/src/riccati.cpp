#include "portopt/riccati.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace portopt {

namespace {

struct HermitePos {
  Eigen::Index k = 0;
  double h = 0.0;
  double s = 0.0;
};

HermitePos hermite_locate(const VectorXd& grid, double tau) {
  const Eigen::Index n = grid.size();
  const double lo = grid[0], hi = grid[n - 1];
  if (tau < lo - 1e-9 || tau > hi + 1e-9) {
    std::ostringstream os;
    os << "tau " << tau << " outside [" << lo << ", " << hi << "]";
    throw std::out_of_range(os.str());
  }
  const double t = std::clamp(tau, lo, hi);
  Eigen::Index k = 0;
  while (k + 2 < n && grid[k + 1] <= t) ++k;
  const double h = grid[k + 1] - grid[k];
  return {k, h, (t - grid[k]) / h};
}

double hermite_value(double y0, double y1, double m0, double m1, double h,
                     double s) {
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * m0 +
         (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * m1;
}

double hermite_slope(double y0, double y1, double m0, double m1, double h,
                     double s) {
  const double s2 = s * s;
  return (6 * s2 - 6 * s) / h * y0 + (3 * s2 - 4 * s + 1) * m0 +
         (6 * s - 6 * s2) / h * y1 + (3 * s2 - 2 * s) * m1;
}

double half_b_ratio(double b) { return 0.5 * b / (1.0 - b); }

// Per-block CIR inner minimization; returns the per-unit-z multiplier and
// the dual value entering the B ODE.
InnerSolution cir_block_inner(const CIRMarket& m, const ConstraintSet& K,
                              double bRisk, int i, double Bi) {
  InnerProblem p;
  p.Sigma = m.SigmaBlock[size_t(i)];
  p.c = m.eta[size_t(i)] +
        m.sigmaZ[i] * Bi * (m.SigmaBlock[size_t(i)] * m.rho[size_t(i)]);
  p.bRisk = bRisk;
  p.K = K.block(m.blockDims, i);
  return solve_inner(p, 1e-12);
}

InnerSolution ou_inner(const OUMarket& m, const ConstraintSet& K, double bRisk,
                       double t, const VectorXd& B) {
  InnerProblem p;
  p.Sigma = bond_b_matrix(m, t).transpose() * m.sigmaMat;
  p.c = p.Sigma * (m.etaMPR + m.sigmaMat.transpose() * B);
  p.bRisk = bRisk;
  p.K = K;
  return solve_inner(p, 1e-12);
}

InnerSolution bs_inner(const BSMarket& m, const ConstraintSet& K, double bRisk,
                       double t) {
  InnerProblem p;
  p.Sigma = m.sigma(t);
  p.c = m.eta(t);
  p.bRisk = bRisk;
  p.K = K;
  return solve_inner(p, 1e-12);
}

}  // namespace

double RiccatiSolution::A_at(double tau) const {
  const auto p = hermite_locate(tauGrid, tau);
  return hermite_value(A[p.k], A[p.k + 1], dA[p.k], dA[p.k + 1], p.h, p.s);
}

double RiccatiSolution::A_slope_at(double tau) const {
  const auto p = hermite_locate(tauGrid, tau);
  return hermite_slope(A[p.k], A[p.k + 1], dA[p.k], dA[p.k + 1], p.h, p.s);
}

VectorXd RiccatiSolution::B_at(double tau) const {
  const auto p = hermite_locate(tauGrid, tau);
  VectorXd out(B.rows());
  for (Eigen::Index i = 0; i < B.rows(); ++i) {
    out[i] = hermite_value(B(i, p.k), B(i, p.k + 1), dB(i, p.k),
                           dB(i, p.k + 1), p.h, p.s);
  }
  return out;
}

VectorXd RiccatiSolution::B_slope_at(double tau) const {
  const auto p = hermite_locate(tauGrid, tau);
  VectorXd out(B.rows());
  for (Eigen::Index i = 0; i < B.rows(); ++i) {
    out[i] = hermite_slope(B(i, p.k), B(i, p.k + 1), dB(i, p.k),
                           dB(i, p.k + 1), p.h, p.s);
  }
  return out;
}

RhsValue rhs(const MarketModel& model, const ConstraintSet& K, double bRisk,
             double tau, double /*A*/, const VectorXd& B) {
  const double T = model.T;
  const double t = std::clamp(T - tau, 0.0, T);
  RhsValue out;

  if (model.is_bs()) {
    const auto sol = bs_inner(model.bs(), K, bRisk, t);
    out.dA = bRisk * model.bs().r(t) + half_b_ratio(bRisk) * sol.dualValue;
    out.dB = VectorXd::Zero(0);
    out.lambdaStar = sol.lambdaStar;
    return out;
  }

  if (model.is_cir()) {
    const CIRMarket& m = model.cir();
    const int nf = m.factors();
    out.dA = bRisk * m.rConst + m.kappa.cwiseProduct(m.theta).dot(B);
    out.dB = VectorXd::Zero(nf);
    out.lambdaStar = VectorXd::Zero(m.dim());
    int off = 0;
    for (int i = 0; i < nf; ++i) {
      const auto sol = cir_block_inner(m, K, bRisk, i, B[i]);
      const double sz = m.sigmaZ[i];
      out.dB[i] = -m.kappa[i] * B[i] + 0.5 * sz * sz * B[i] * B[i] +
                  half_b_ratio(bRisk) * sol.dualValue;
      out.lambdaStar.segment(off, m.blockDims[size_t(i)]) = sol.lambdaStar;
      off += m.blockDims[size_t(i)];
    }
    return out;
  }

  const OUMarket& m = model.ou();
  const auto sol = ou_inner(m, K, bRisk, t, B);
  out.dA = bRisk * m.w0 + m.kappa.cwiseProduct(m.theta).dot(B) +
           0.5 * (m.sigmaMat.transpose() * B).squaredNorm() +
           half_b_ratio(bRisk) * sol.dualValue;
  out.dB = bRisk * m.w1 - m.kappa.cwiseProduct(B);
  out.lambdaStar = sol.lambdaStar;
  return out;
}

VectorXd ou_closed_form_B(const OUMarket& market, double bRisk, double tau) {
  const int m = market.factors();
  VectorXd B(m);
  for (int i = 0; i < m; ++i) {
    B[i] = market.w1[i] * bRisk * (-std::expm1(-market.kappa[i] * tau)) /
           market.kappa[i];
  }
  return B;
}

RiccatiSolution integrate(const MarketModel& model, const ConstraintSet& K,
                          double bRisk, double T, int steps) {
  if (steps < 8) throw std::invalid_argument("integrate: steps < 8");
  if (!(T > 0.0)) throw std::invalid_argument("integrate: T <= 0");
  const int m = model.factors();
  const double h = T / steps;

  RiccatiSolution sol;
  sol.tauGrid = VectorXd::LinSpaced(steps + 1, 0.0, T);
  sol.A = VectorXd::Zero(steps + 1);
  sol.dA = VectorXd::Zero(steps + 1);
  sol.B = MatrixXd::Zero(m, steps + 1);
  sol.dB = MatrixXd::Zero(m, steps + 1);

  const auto check_escape = [&](double A, const VectorXd& B, double tau) {
    if (std::abs(A) > 1e8 || (B.size() > 0 && B.cwiseAbs().maxCoeff() > 1e8)) {
      std::ostringstream os;
      os << "finite escape: exponent magnitude exceeded 1e8 at tau = " << tau;
      throw FiniteEscapeError(os.str());
    }
  };

  VectorXd prevLambda;
  const auto monitor = [&](const VectorXd& lam, double tau) {
    if (prevLambda.size() == lam.size() &&
        (lam - prevLambda).cwiseAbs().maxCoeff() > 1e-3 &&
        sol.warnings.size() < 16) {
      std::ostringstream os;
      os << "inner multiplier jump above 1e-3 near tau = " << tau;
      sol.warnings.push_back(os.str());
    }
    prevLambda = lam;
  };

  if (model.is_bs()) {
    // dA does not depend on A, so composite Simpson integrates it exactly to
    // fourth order.
    double A = 0.0;
    RhsValue r0 = rhs(model, K, bRisk, 0.0, A, VectorXd::Zero(0));
    sol.dA[0] = r0.dA;
    for (int k = 0; k < steps; ++k) {
      const double tau = k * h;
      monitor(r0.lambdaStar, tau);
      const RhsValue rm =
          rhs(model, K, bRisk, tau + 0.5 * h, A, VectorXd::Zero(0));
      const RhsValue r1 = rhs(model, K, bRisk, tau + h, A, VectorXd::Zero(0));
      A += h / 6.0 * (r0.dA + 4.0 * rm.dA + r1.dA);
      check_escape(A, VectorXd::Zero(0), tau + h);
      sol.A[k + 1] = A;
      sol.dA[k + 1] = r1.dA;
      r0 = r1;
    }
    return sol;
  }

  if (model.is_ou()) {
    // B is known in closed form; integrate A alone with RK4 stages that
    // evaluate B exactly.
    const OUMarket& ou = model.ou();
    double A = 0.0;
    for (int k = 0; k <= steps; ++k) {
      sol.B.col(k) = ou_closed_form_B(ou, bRisk, k * h);
      sol.dB.col(k) = bRisk * ou.w1 - ou.kappa.cwiseProduct(sol.B.col(k));
    }
    RhsValue r0 = rhs(model, K, bRisk, 0.0, A, sol.B.col(0));
    sol.dA[0] = r0.dA;
    for (int k = 0; k < steps; ++k) {
      const double tau = k * h;
      monitor(r0.lambdaStar, tau);
      const VectorXd Bm = ou_closed_form_B(ou, bRisk, tau + 0.5 * h);
      const RhsValue rm = rhs(model, K, bRisk, tau + 0.5 * h, A, Bm);
      const RhsValue r1 = rhs(model, K, bRisk, tau + h, A, sol.B.col(k + 1));
      A += h / 6.0 * (r0.dA + 4.0 * rm.dA + r1.dA);
      check_escape(A, sol.B.col(k + 1), tau + h);
      sol.A[k + 1] = A;
      sol.dA[k + 1] = r1.dA;
      r0 = r1;
    }
    return sol;
  }

  // CIR: classic RK4 on (A, B) jointly.
  double A = 0.0;
  VectorXd B = VectorXd::Zero(m);
  {
    const RhsValue r0 = rhs(model, K, bRisk, 0.0, A, B);
    sol.dA[0] = r0.dA;
    sol.dB.col(0) = r0.dB;
  }
  for (int k = 0; k < steps; ++k) {
    const double tau = k * h;
    const RhsValue k1 = rhs(model, K, bRisk, tau, A, B);
    monitor(k1.lambdaStar, tau);
    const RhsValue k2 =
        rhs(model, K, bRisk, tau + 0.5 * h, A + 0.5 * h * k1.dA,
            B + 0.5 * h * k1.dB);
    const RhsValue k3 =
        rhs(model, K, bRisk, tau + 0.5 * h, A + 0.5 * h * k2.dA,
            B + 0.5 * h * k2.dB);
    const RhsValue k4 =
        rhs(model, K, bRisk, tau + h, A + h * k3.dA, B + h * k3.dB);
    A += h / 6.0 * (k1.dA + 2.0 * k2.dA + 2.0 * k3.dA + k4.dA);
    B += h / 6.0 * (k1.dB + 2.0 * k2.dB + 2.0 * k3.dB + k4.dB);
    check_escape(A, B, tau + h);
    const RhsValue rEnd = rhs(model, K, bRisk, tau + h, A, B);
    sol.A[k + 1] = A;
    sol.B.col(k + 1) = B;
    sol.dA[k + 1] = rEnd.dA;
    sol.dB.col(k + 1) = rEnd.dB;
  }
  return sol;
}

RiccatiSolution with_shifted_a(const RiccatiSolution& sol, double shift) {
  RiccatiSolution out = sol;
  const double T = sol.horizon();
  for (Eigen::Index k = 0; k < out.A.size(); ++k) {
    out.A[k] += shift * sol.tauGrid[k] / T;
    out.dA[k] += shift / T;
  }
  return out;
}

EASCoefficients extract_eas(const MarketModel& model, const ConstraintSet& K,
                            double bRisk) {
  const int m = model.factors();
  EASCoefficients c;
  c.k0 = VectorXd::Zero(m);
  c.k1 = MatrixXd::Zero(m, m);
  c.h0 = MatrixXd::Zero(m, m);
  c.l0hat = MatrixXd::Zero(m, m);
  c.h1.assign(size_t(m), MatrixXd::Zero(m, m));
  c.l1hat.assign(size_t(m), MatrixXd::Zero(m, m));
  const auto zerov = [m](double, const VectorXd&) { return VectorXd::Zero(m); };
  const auto zerom = [m](double, const VectorXd&) { return MatrixXd::Zero(m, m); };
  c.p1 = zerov;
  c.q1 = zerov;
  c.g0 = zerov;
  c.g1 = zerom;
  c.p0 = [](double, const VectorXd&) { return 0.0; };
  c.q0 = [](double, const VectorXd&) { return 0.0; };

  if (model.is_bs()) {
    const BSMarket bs = model.bs();
    c.p0 = [bs, K, bRisk](double t, const VectorXd&) {
      const auto sol = bs_inner(bs, K, bRisk, t);
      return bs.r(t) + K.support(sol.lambdaStar);
    };
    c.q0 = [bs, K, bRisk](double t, const VectorXd&) {
      const auto sol = bs_inner(bs, K, bRisk, t);
      return bs.sigma(t).lu().solve((bs.eta(t) + sol.lambdaStar).eval())
          .squaredNorm();
    };
    return c;
  }

  if (model.is_cir()) {
    const CIRMarket cir = model.cir();
    c.k0 = cir.kappa.cwiseProduct(cir.theta);
    c.k1 = (-cir.kappa).asDiagonal();
    for (int i = 0; i < m; ++i) {
      const double s2 = cir.sigmaZ[i] * cir.sigmaZ[i];
      c.h1[size_t(i)](i, i) = s2;
      c.l1hat[size_t(i)](i, i) = s2 * cir.rho[size_t(i)].squaredNorm();
    }
    c.p0 = [cir](double, const VectorXd&) { return cir.rConst; };
    c.p1 = [cir, K, bRisk, m](double, const VectorXd& B) {
      VectorXd out(m);
      for (int i = 0; i < m; ++i) {
        const auto sol = cir_block_inner(cir, K, bRisk, i, B[i]);
        out[i] = K.block(cir.blockDims, i).support(sol.lambdaStar);
      }
      return out;
    };
    c.q1 = [cir, K, bRisk, m](double, const VectorXd& B) {
      VectorXd out(m);
      for (int i = 0; i < m; ++i) {
        const auto sol = cir_block_inner(cir, K, bRisk, i, B[i]);
        out[i] = cir.SigmaBlock[size_t(i)]
                     .lu()
                     .solve((cir.eta[size_t(i)] + sol.lambdaStar).eval())
                     .squaredNorm();
      }
      return out;
    };
    c.g1 = [cir, K, bRisk, m](double, const VectorXd& B) {
      MatrixXd out = MatrixXd::Zero(m, m);
      for (int i = 0; i < m; ++i) {
        const auto sol = cir_block_inner(cir, K, bRisk, i, B[i]);
        out(i, i) = cir.sigmaZ[i] *
                    cir.rho[size_t(i)].dot(cir.SigmaBlock[size_t(i)].lu().solve(
                        (cir.eta[size_t(i)] + sol.lambdaStar).eval()));
      }
      return out;
    };
    return c;
  }

  const OUMarket ou = model.ou();
  c.k0 = ou.kappa.cwiseProduct(ou.theta);
  c.k1 = (-ou.kappa).asDiagonal();
  c.h0 = ou.sigmaMat * ou.sigmaMat.transpose();
  c.l0hat = c.h0;
  c.p0 = [ou, K, bRisk](double t, const VectorXd& B) {
    const auto sol = ou_inner(ou, K, bRisk, t, B);
    return ou.w0 + K.support(sol.lambdaStar);
  };
  c.p1 = [ou](double, const VectorXd&) { return ou.w1; };
  c.q0 = [ou, K, bRisk](double t, const VectorXd& B) {
    const auto sol = ou_inner(ou, K, bRisk, t, B);
    const MatrixXd Sg = bond_b_matrix(ou, t).transpose() * ou.sigmaMat;
    return (ou.etaMPR + Sg.lu().solve(sol.lambdaStar)).squaredNorm();
  };
  c.g0 = [ou, K, bRisk](double t, const VectorXd& B) {
    const auto sol = ou_inner(ou, K, bRisk, t, B);
    return (ou.sigmaMat * ou.etaMPR +
            bond_b_matrix(ou, t).transpose().lu().solve(sol.lambdaStar))
        .eval();
  };
  return c;
}

RhsValue generic_rhs(const EASCoefficients& c, double bRisk, double T,
                     double tau, const VectorXd& B) {
  const double t = std::clamp(T - tau, 0.0, T);
  const int m = int(B.size());
  const double ratio = half_b_ratio(bRisk);

  RhsValue out;
  out.dA = bRisk * c.p0(t, B) + c.k0.dot(B) + 0.5 * B.dot(c.h0 * B) +
           ratio * (c.q0(t, B) + 2.0 * c.g0(t, B).dot(B) +
                    B.dot(c.l0hat * B));
  out.dB = bRisk * c.p1(t, B) + c.k1.transpose() * B +
           ratio * (c.q1(t, B) + 2.0 * (c.g1(t, B) * B));
  for (int k = 0; k < m; ++k) {
    out.dB[k] += 0.5 * B.dot(c.h1[size_t(k)] * B) +
                 ratio * B.dot(c.l1hat[size_t(k)] * B);
  }
  out.lambdaStar = VectorXd::Zero(0);
  return out;
}

EASReport eas_probe(const MarketModel& model, const ConstraintSet& K,
                    double bRisk, int samples, uint64_t seed) {
  if (samples < 3) throw std::invalid_argument("eas_probe: samples < 3");
  EASReport rep;
  rep.quantity = {"muZ",
                  "SigmaZ SigmaZ'",
                  "SigmaZ rho (SigmaZ rho)'",
                  "r + deltaK(lambda*)",
                  "||Sigma^{-1}(mu + lambda* - r 1)||^2",
                  "SigmaZ rho Sigma^{-1}(mu + lambda* - r 1)"};
  rep.maxSecondDiff.assign(6, 0.0);

  const int m = model.factors();
  if (m == 0) {
    rep.pass = true;
    return rep;
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  const auto draw_z = [&]() {
    VectorXd z(m);
    for (int i = 0; i < m; ++i) {
      z[i] = model.is_cir() ? 0.2 + 0.3 * uni(rng) : -0.1 + 0.2 * uni(rng);
    }
    return z;
  };

  // The six condition quantities at one state, flattened per quantity.
  const auto evaluate = [&](double t, const VectorXd& B, const VectorXd& z) {
    const CoefficientFrame f = coeffs(model, t, z);
    InnerProblem p;
    p.Sigma = f.Sigma;
    p.c = f.mu - VectorXd::Constant(f.mu.size(), f.rShort) +
          f.Sigma * f.rho.transpose() * f.SigmaZ.transpose() * B;
    p.bRisk = bRisk;
    p.K = K;
    const auto sol = solve_inner(p, 1e-12);
    const VectorXd excess = f.mu + sol.lambdaStar -
                            VectorXd::Constant(f.mu.size(), f.rShort);
    const VectorXd sigInv = f.Sigma.lu().solve(excess);
    const MatrixXd szr = f.SigmaZ * f.rho;

    std::vector<VectorXd> q(6);
    q[0] = f.muZ;
    q[1] = (f.SigmaZ * f.SigmaZ.transpose()).reshaped();
    q[2] = (szr * szr.transpose()).reshaped();
    q[3] = VectorXd::Constant(1, f.rShort + K.support(sol.lambdaStar));
    q[4] = VectorXd::Constant(1, sigInv.squaredNorm());
    q[5] = szr * sigInv;
    return q;
  };

  for (int s = 0; s < samples; ++s) {
    const double t = model.T * 0.999 * uni(rng);
    VectorXd B(m);
    for (int i = 0; i < m; ++i) B[i] = -0.5 + uni(rng);
    const VectorXd z0 = draw_z();
    VectorXd dir(m);
    for (int i = 0; i < m; ++i) dir[i] = -1.0 + 2.0 * uni(rng);
    double delta = 0.02 + 0.03 * uni(rng);
    if (model.is_cir()) {
      // Keep the whole triple strictly positive.
      for (int i = 0; i < m; ++i) {
        const double room = (z0[i] - 0.05) / (2.0 * std::abs(dir[i]) + 1e-12);
        delta = std::min(delta, room);
      }
    }
    const auto qa = evaluate(t, B, z0);
    const auto qb = evaluate(t, B, z0 + delta * dir);
    const auto qc = evaluate(t, B, z0 + 2.0 * delta * dir);
    for (int q = 0; q < 6; ++q) {
      const double scale = std::max(
          {1.0, qa[size_t(q)].cwiseAbs().maxCoeff(),
           qc[size_t(q)].cwiseAbs().maxCoeff()});
      const double diff =
          (qa[size_t(q)] - 2.0 * qb[size_t(q)] + qc[size_t(q)]).norm() / scale;
      rep.maxSecondDiff[size_t(q)] =
          std::max(rep.maxSecondDiff[size_t(q)], diff);
    }
  }

  rep.pass = true;
  for (int q = 0; q < 6; ++q) {
    if (rep.maxSecondDiff[size_t(q)] > 1e-7) {
      rep.pass = false;
      if (rep.failed.empty()) rep.failed = rep.quantity[size_t(q)];
    }
  }
  return rep;
}

}  // namespace portopt
