#include "portopt/inner.hpp"

#include <cmath>
#include <optional>

namespace portopt {

namespace {

double objective(const InnerProblem& p, const VectorXd& pi) {
  return p.c.dot(pi) -
         0.5 * (1.0 - p.bRisk) * (p.Sigma.transpose() * pi).squaredNorm();
}

// Componentwise bounds if K is a box-like set (box, orthant, full space, or a
// product of those); nullopt for coupled variants.
std::optional<std::pair<VectorXd, VectorXd>> box_bounds(const ConstraintSet& K) {
  using namespace constraint_detail;
  const Variant& v = K.raw();
  if (const auto* fs = std::get_if<FullSpace>(&v)) {
    return std::make_pair(VectorXd::Constant(fs->dim, -kInf).eval(),
                          VectorXd::Constant(fs->dim, kInf).eval());
  }
  if (const auto* bx = std::get_if<Box>(&v)) {
    return std::make_pair(bx->lower, bx->upper);
  }
  if (const auto* nn = std::get_if<NonNegOrthant>(&v)) {
    return std::make_pair(VectorXd::Zero(nn->dim).eval(),
                          VectorXd::Constant(nn->dim, kInf).eval());
  }
  if (const auto* pr = std::get_if<Product>(&v)) {
    VectorXd lo(K.dim()), hi(K.dim());
    int off = 0;
    for (const ConstraintSet& child : pr->children) {
      auto sub = box_bounds(child);
      if (!sub) return std::nullopt;
      lo.segment(off, child.dim()) = sub->first;
      hi.segment(off, child.dim()) = sub->second;
      off += child.dim();
    }
    return std::make_pair(lo, hi);
  }
  return std::nullopt;
}

// Active-set polish for box-like K: solve the equality-constrained optimum on
// the face identified by the projected-gradient iterate, then repair any KKT
// sign violations. Exact up to the linear solves.
VectorXd polish_box(const MatrixXd& Q, const VectorXd& c, const VectorXd& lo,
                    const VectorXd& hi, VectorXd pi) {
  const Eigen::Index d = pi.size();
  const double tol = 1e-9;

  for (int round = 0; round < 3 * int(d) + 3; ++round) {
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < d; ++i) {
      const bool atLo = std::isfinite(lo[i]) && pi[i] - lo[i] < tol;
      const bool atHi = std::isfinite(hi[i]) && hi[i] - pi[i] < tol;
      if (atLo) {
        pi[i] = lo[i];
      } else if (atHi) {
        pi[i] = hi[i];
      } else {
        free.push_back(i);
      }
    }
    if (!free.empty()) {
      const Eigen::Index k = Eigen::Index(free.size());
      MatrixXd Qff(k, k);
      VectorXd rhs(k);
      for (Eigen::Index a = 0; a < k; ++a) {
        rhs[a] = c[free[size_t(a)]];
        for (Eigen::Index b = 0; b < k; ++b) {
          Qff(a, b) = Q(free[size_t(a)], free[size_t(b)]);
        }
        for (Eigen::Index j = 0; j < d; ++j) {
          if (std::find(free.begin(), free.end(), j) == free.end()) {
            rhs[a] -= Q(free[size_t(a)], j) * pi[j];
          }
        }
      }
      const VectorXd sol = Qff.ldlt().solve(rhs);
      bool inside = true;
      for (Eigen::Index a = 0; a < k; ++a) {
        const Eigen::Index i = free[size_t(a)];
        if (sol[a] < lo[i] - tol || sol[a] > hi[i] + tol) inside = false;
      }
      if (!inside) {
        // The face guess was too optimistic; clamp and retry with the
        // tighter active set this produces.
        for (Eigen::Index a = 0; a < k; ++a) {
          const Eigen::Index i = free[size_t(a)];
          pi[i] = std::clamp(sol[a], lo[i], hi[i]);
        }
        continue;
      }
      for (Eigen::Index a = 0; a < k; ++a) pi[free[size_t(a)]] = sol[a];
    }
    // KKT signs: g = c - Q pi must vanish on free coords, point outward on
    // active ones. Release the worst violator if any.
    const VectorXd g = c - Q * pi;
    Eigen::Index worst = -1;
    double worstViol = 1e-12 * (1.0 + g.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < d; ++i) {
      const bool atLo = std::isfinite(lo[i]) && pi[i] <= lo[i];
      const bool atHi = std::isfinite(hi[i]) && pi[i] >= hi[i];
      double viol = 0.0;
      if (atLo && g[i] > 0.0) viol = g[i];
      if (atHi && g[i] < 0.0) viol = -g[i];
      if (viol > worstViol) {
        worstViol = viol;
        worst = i;
      }
    }
    if (worst < 0) return pi;
    // Nudge off the bound so the next round treats it as free.
    const double eps = 10.0 * tol * (1.0 + std::abs(pi[worst]));
    pi[worst] += (pi[worst] <= lo[worst] ? eps : -eps);
  }
  return pi;
}

}  // namespace

InnerSolution solve_inner(const InnerProblem& p, double tol, long maxIter) {
  const Eigen::Index d = p.c.size();
  if (p.Sigma.rows() != d || p.Sigma.cols() != d) {
    throw std::invalid_argument("solve_inner: Sigma/c dimension mismatch");
  }
  if (p.K.dim() != int(d)) {
    throw std::invalid_argument("solve_inner: constraint dimension mismatch");
  }
  if (!(p.bRisk < 1.0) || p.bRisk == 0.0) {
    throw std::invalid_argument("solve_inner: need bRisk < 1, bRisk != 0");
  }
  if (!(tol > 0.0)) throw std::invalid_argument("solve_inner: tol <= 0");

  const double oneMb = 1.0 - p.bRisk;
  const MatrixXd Q = oneMb * (p.Sigma * p.Sigma.transpose());
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es(Q);
  const double L = es.eigenvalues().maxCoeff();
  if (!(L > 0.0) || !(es.eigenvalues().minCoeff() > 0.0)) {
    throw std::invalid_argument("solve_inner: Sigma Sigma' not positive definite");
  }

  InnerSolution out;
  out.piStar = VectorXd::Zero(d);

  const VectorXd piU = Q.ldlt().solve(p.c);
  const VectorXd piUproj = p.K.project(piU);
  if ((piUproj - piU).norm() <= 1e-13 * (1.0 + piU.norm())) {
    // Unconstrained optimum is feasible: lam* = 0 exactly.
    out.piStar = piU;
    out.lambdaStar = VectorXd::Zero(d);
    out.primalValue = 0.5 * p.c.dot(piU);
    out.dualValue = p.Sigma.lu().solve(p.c).squaredNorm();
    out.slackness = p.K.support(out.lambdaStar);
    out.iterations = 0;
    return out;
  }

  VectorXd pi = piUproj;
  const double step = 1.0 / L;
  long it = 0;
  double h = objective(p, pi);
  for (; it < maxIter; ++it) {
    const VectorXd piNext = p.K.project(pi + step * (p.c - Q * pi));
    const double hNext = objective(p, piNext);
    if (hNext < h - tol) {
      throw InternalConsistencyError(
          "solve_inner: projected gradient lost monotonicity");
    }
    const double delta = (piNext - pi).norm();
    pi = piNext;
    h = hNext;
    if (delta < tol) break;
  }
  if (it >= maxIter) {
    throw ConvergenceError("solve_inner: no convergence after max iterations",
                           pi);
  }

  if (const auto bounds = box_bounds(p.K)) {
    pi = polish_box(Q, p.c, bounds->first, bounds->second, pi);
  }

  VectorXd lam = Q * pi - p.c;
  // Snap roundoff-level multiplier entries to zero so unbounded directions do
  // not report a spurious infinite support.
  const double scale =
      std::max({1.0, p.c.cwiseAbs().maxCoeff(), (Q * pi).cwiseAbs().maxCoeff()});
  const double snap = 100.0 * std::max(tol, 1e-14) * scale;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (std::abs(lam[i]) <= snap) lam[i] = 0.0;
  }

  const double deltaK = p.K.support(lam);
  if (!std::isfinite(deltaK)) {
    throw InternalConsistencyError(
        "solve_inner: recovered multiplier has infinite support value");
  }

  out.piStar = pi;
  out.lambdaStar = lam;
  out.primalValue = objective(p, pi);
  out.dualValue =
      2.0 * oneMb * deltaK + p.Sigma.lu().solve(p.c + lam).squaredNorm();
  out.slackness = deltaK + pi.dot(lam);
  out.iterations = it + 1;
  return out;
}

InnerSolution brute_force_inner(const InnerProblem& p, int gridN,
                                double radius) {
  const int d = int(p.c.size());
  if (d > 3) {
    throw std::invalid_argument("brute_force_inner: only d <= 3 supported");
  }
  if (gridN < 2) throw std::invalid_argument("brute_force_inner: gridN < 2");

  VectorXd best = VectorXd::Zero(d);
  double bestVal = -kInf;
  long evals = 0;

  VectorXd pt(d);
  std::vector<int> idx(size_t(d), 0);
  const long total = long(std::pow(double(gridN), d));
  for (long flat = 0; flat < total; ++flat) {
    long rem = flat;
    for (int i = 0; i < d; ++i) {
      idx[size_t(i)] = int(rem % gridN);
      rem /= gridN;
      pt[i] = -radius + 2.0 * radius * idx[size_t(i)] / (gridN - 1);
    }
    if (!p.K.contains(pt)) continue;
    ++evals;
    const double val = objective(p, pt);
    if (val > bestVal) {
      bestVal = val;
      best = pt;
    }
  }
  if (!(bestVal > -kInf)) {
    throw std::invalid_argument(
        "brute_force_inner: no lattice point inside K; widen radius");
  }

  InnerSolution out;
  out.piStar = best;
  out.lambdaStar = VectorXd::Zero(d);
  out.primalValue = bestVal;
  out.dualValue = 2.0 * (1.0 - p.bRisk) * bestVal;
  out.slackness = 0.0;
  out.iterations = evals;
  return out;
}

}  // namespace portopt
