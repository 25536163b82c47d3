#include "portopt/markets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace portopt {

namespace {

// Locate the interpolation interval and weight for a clamped query.
struct GridPos {
  Eigen::Index i0 = 0;
  Eigen::Index i1 = 0;
  double w = 0.0;  // weight on i1
};

GridPos locate(const VectorXd& grid, double ti) {
  const Eigen::Index n = grid.size();
  if (n == 0) throw std::invalid_argument("empty time table");
  if (n == 1 || ti <= grid[0]) return {0, 0, 0.0};
  if (ti >= grid[n - 1]) return {n - 1, n - 1, 0.0};
  Eigen::Index hi = 1;
  while (grid[hi] < ti) ++hi;
  const Eigen::Index lo = hi - 1;
  const double span = grid[hi] - grid[lo];
  return {lo, hi, span > 0.0 ? (ti - grid[lo]) / span : 0.0};
}

void check_time(const MarketModel& model, double t) {
  if (t < -1e-12 || t > model.T + 1e-12) {
    std::ostringstream os;
    os << "time " << t << " outside [0, " << model.T << "]";
    throw std::invalid_argument(os.str());
  }
}

double condition_number(const MatrixXd& M) {
  const auto sv = M.jacobiSvd().singularValues();
  if (sv.size() == 0 || sv[sv.size() - 1] <= 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return sv[0] / sv[sv.size() - 1];
}

}  // namespace

ScalarTable ScalarTable::constant(double value) {
  ScalarTable s;
  s.t = VectorXd::Zero(1);
  s.v = VectorXd::Constant(1, value);
  return s;
}

double ScalarTable::operator()(double ti) const {
  const GridPos p = locate(t, ti);
  return (1.0 - p.w) * v[p.i0] + p.w * v[p.i1];
}

VectorTable VectorTable::constant(VectorXd value) {
  VectorTable s;
  s.t = VectorXd::Zero(1);
  s.v = value;
  return s;
}

VectorXd VectorTable::operator()(double ti) const {
  const GridPos p = locate(t, ti);
  return (1.0 - p.w) * v.col(p.i0) + p.w * v.col(p.i1);
}

MatrixTable MatrixTable::constant(MatrixXd value) {
  MatrixTable s;
  s.t = VectorXd::Zero(1);
  s.v.push_back(std::move(value));
  return s;
}

MatrixXd MatrixTable::operator()(double ti) const {
  const GridPos p = locate(t, ti);
  return (1.0 - p.w) * v[size_t(p.i0)] + p.w * v[size_t(p.i1)];
}

int CIRMarket::dim() const {
  return std::accumulate(blockDims.begin(), blockDims.end(), 0);
}

int MarketModel::dim() const {
  if (is_bs()) return bs().dim();
  if (is_cir()) return cir().dim();
  return ou().dim();
}

int MarketModel::factors() const {
  if (is_bs()) return 0;
  if (is_cir()) return cir().factors();
  return ou().factors();
}

CoefficientFrame coeffs(const MarketModel& model, double t, const VectorXd& z) {
  check_time(model, t);
  if (z.size() != model.factors()) {
    throw std::invalid_argument("factor dimension mismatch");
  }
  CoefficientFrame f;

  if (model.is_bs()) {
    const BSMarket& m = model.bs();
    const int d = m.dim();
    f.muZ = VectorXd::Zero(0);
    f.SigmaZ = MatrixXd::Zero(0, 0);
    f.rho = MatrixXd::Zero(0, d);
    f.rShort = m.r(t);
    f.mu = VectorXd::Constant(d, f.rShort) + m.eta(t);
    f.Sigma = m.sigma(t);
    return f;
  }

  if (model.is_cir()) {
    const CIRMarket& m = model.cir();
    const int nf = m.factors();
    const int d = m.dim();
    for (int i = 0; i < nf; ++i) {
      if (z[i] <= 0.0) {
        std::ostringstream os;
        os << "CIR factor z[" << i << "] = " << z[i] << " must be positive";
        throw std::domain_error(os.str());
      }
    }
    f.muZ = m.kappa.cwiseProduct(m.theta - z);
    f.SigmaZ = MatrixXd::Zero(nf, nf);
    f.rho = MatrixXd::Zero(nf, d);
    f.rShort = m.rConst;
    f.mu = VectorXd::Constant(d, m.rConst);
    f.Sigma = MatrixXd::Zero(d, d);
    int off = 0;
    for (int i = 0; i < nf; ++i) {
      const int di = m.blockDims[size_t(i)];
      const double sz = std::sqrt(z[i]);
      f.SigmaZ(i, i) = m.sigmaZ[i] * sz;
      f.rho.block(i, off, 1, di) = m.rho[size_t(i)].transpose();
      f.mu.segment(off, di) += m.eta[size_t(i)] * z[i];
      f.Sigma.block(off, off, di, di) = m.SigmaBlock[size_t(i)] * sz;
      off += di;
    }
    return f;
  }

  const OUMarket& m = model.ou();
  const int nf = m.factors();
  f.muZ = m.kappa.cwiseProduct(m.theta - z);
  f.SigmaZ = m.sigmaMat;
  f.rho = MatrixXd::Identity(nf, nf);
  f.rShort = m.w0 + m.w1.dot(z);
  f.Sigma = bond_b_matrix(m, t).transpose() * m.sigmaMat;
  f.mu = VectorXd::Constant(nf, f.rShort) + f.Sigma * m.etaMPR;
  return f;
}

BondExponents bond_exponents(const OUMarket& market, double tau) {
  if (tau < 0.0) throw std::invalid_argument("bond_exponents: tau < 0");
  const int m = market.factors();

  const auto b_at = [&](double s) {
    VectorXd b(m);
    for (int i = 0; i < m; ++i) {
      b[i] = -market.w1[i] * (-std::expm1(-market.kappa[i] * s)) /
             market.kappa[i];
    }
    return b;
  };

  BondExponents out;
  out.b = b_at(tau);

  // a(tau) by composite Simpson on
  //   a'(s) = b(s)'(kappa.*theta - sigma eta) + 0.5||sigma' b(s)||^2 - w0.
  const VectorXd driftAdj =
      market.kappa.cwiseProduct(market.theta) - market.sigmaMat * market.etaMPR;
  const auto da = [&](double s) {
    const VectorXd b = b_at(s);
    return b.dot(driftAdj) +
           0.5 * (market.sigmaMat.transpose() * b).squaredNorm() - market.w0;
  };
  const int n = 256;  // even; integrand is smooth
  const double h = tau / n;
  double acc = da(0.0) + da(tau);
  for (int i = 1; i < n; ++i) {
    acc += (i % 2 == 1 ? 4.0 : 2.0) * da(i * h);
  }
  out.a = acc * h / 3.0;
  return out;
}

MatrixXd bond_b_matrix(const OUMarket& market, double t) {
  const int m = market.factors();
  MatrixXd B(m, m);
  for (int j = 0; j < m; ++j) {
    const double tau = market.maturities[j] - t;
    if (tau < 0.0) throw std::invalid_argument("bond matured inside horizon");
    for (int i = 0; i < m; ++i) {
      B(i, j) = -market.w1[i] * (-std::expm1(-market.kappa[i] * tau)) /
                market.kappa[i];
    }
  }
  return B;
}

bool ValidationReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const ValidationCheck& c) { return c.pass; });
}

namespace {

void add_check(ValidationReport& rep, const std::string& name, bool pass,
               const std::string& detail = "") {
  rep.checks.push_back({name, pass, detail});
}

}  // namespace

ValidationReport validate(const MarketModel& model) {
  ValidationReport rep;
  add_check(rep, "horizon positive", model.T > 0.0);

  if (model.is_bs()) {
    const BSMarket& m = model.bs();
    bool nonsing = true;
    double worst = 0.0;
    for (int k = 0; k < 64; ++k) {
      const double t = model.T * k / 63.0;
      const double c = condition_number(m.sigma(t));
      worst = std::max(worst, c);
      if (!(c < 1e12)) nonsing = false;
    }
    std::ostringstream os;
    os << "max cond " << worst;
    add_check(rep, "sigma(t) nonsingular", nonsing, os.str());
    add_check(rep, "z0 empty", model.z0.size() == 0);
    return rep;
  }

  if (model.is_cir()) {
    const CIRMarket& m = model.cir();
    const int nf = m.factors();
    add_check(rep, "block structure",
              int(m.blockDims.size()) == nf && int(m.rho.size()) == nf &&
                  int(m.eta.size()) == nf && int(m.SigmaBlock.size()) == nf);
    if (!rep.checks.back().pass) return rep;
    for (int i = 0; i < nf; ++i) {
      std::ostringstream tag;
      tag << "[" << i << "]";
      const double lhs = 2.0 * m.kappa[i] * m.theta[i];
      const double rhs = m.sigmaZ[i] * m.sigmaZ[i];
      std::ostringstream os;
      os << "2*kappa*theta = " << lhs << " vs sigmaZ^2 = " << rhs;
      add_check(rep, "Feller" + tag.str(), lhs > rhs, os.str());
      add_check(rep, "||rho||<1" + tag.str(), m.rho[size_t(i)].norm() < 1.0);
      add_check(rep, "Sigma block nonsingular" + tag.str(),
                condition_number(m.SigmaBlock[size_t(i)]) < 1e12);
      add_check(rep, "kappa,theta,sigmaZ positive" + tag.str(),
                m.kappa[i] > 0.0 && m.theta[i] > 0.0 && m.sigmaZ[i] > 0.0);
    }
    add_check(rep, "z0 positive",
              model.z0.size() == nf && (model.z0.array() > 0.0).all());
    return rep;
  }

  const OUMarket& m = model.ou();
  const int nf = m.factors();
  add_check(rep, "sigmaMat nonsingular", condition_number(m.sigmaMat) < 1e12);
  bool matOk = m.maturities.size() == nf;
  for (int i = 0; matOk && i < nf; ++i) {
    if (m.maturities[i] <= model.T) matOk = false;
    for (int j = i + 1; j < nf; ++j) {
      if (m.maturities[i] == m.maturities[j]) matOk = false;
    }
  }
  add_check(rep, "maturities beyond horizon, distinct", matOk);
  bool bNonsing = matOk;
  double worst = 0.0;
  for (int k = 0; bNonsing && k < 64; ++k) {
    const double t = model.T * k / 63.0;
    const double c = condition_number(bond_b_matrix(m, t));
    worst = std::max(worst, c);
    if (!(c < 1e12)) bNonsing = false;
  }
  std::ostringstream os;
  os << "max cond " << worst;
  add_check(rep, "bond exponent matrix nonsingular", bNonsing, os.str());
  add_check(rep, "kappa positive", (m.kappa.array() > 0.0).all());
  add_check(rep, "z0 dimension", model.z0.size() == nf);
  return rep;
}

}  // namespace portopt
