#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "portopt/constraints.hpp"
#include "portopt/inner.hpp"
#include "portopt/markets.hpp"

namespace portopt {

/// Time grids of the value-function exponents A(tau), B(tau) with stored
/// right-hand-side slopes for C^1 cubic-Hermite interpolation.
struct RiccatiSolution {
  VectorXd tauGrid;  // increasing, tauGrid[0] = 0
  VectorXd A;
  VectorXd dA;
  MatrixXd B;   // m x n, column per grid point
  MatrixXd dB;
  std::vector<std::string> warnings;

  double horizon() const { return tauGrid[tauGrid.size() - 1]; }
  int factors() const { return int(B.rows()); }

  double A_at(double tau) const;
  double A_slope_at(double tau) const;
  VectorXd B_at(double tau) const;
  VectorXd B_slope_at(double tau) const;
};

class FiniteEscapeError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One evaluation of the exponent ODE right-hand sides at (tau, B), using the
/// market-specific reduction of the inner dual minimization.
struct RhsValue {
  double dA = 0.0;
  VectorXd dB;
  VectorXd lambdaStar;  // stacked multiplier of the inner solve, for
                        // continuity monitoring
};

RhsValue rhs(const MarketModel& model, const ConstraintSet& K, double bRisk,
             double tau, double A, const VectorXd& B);

RiccatiSolution integrate(const MarketModel& model, const ConstraintSet& K,
                          double bRisk, double T, int steps);

/// Closed-form B for the bond market, B_i(tau) = w1_i b (1 - e^{-kappa_i
/// tau}) / kappa_i; used by integrate and offered for cross-checks.
VectorXd ou_closed_form_B(const OUMarket& market, double bRisk, double tau);

/// Tilt A by shift * tau / T (slopes adjusted consistently). Used for fault
/// injection: the residual checks see the slope error shift / T.
RiccatiSolution with_shifted_a(const RiccatiSolution& sol, double shift);

/// Coefficient functions of the affine-separability condition. The rank-3
/// tensors are stored as m slices: slice k holds the z_k-coefficients.
struct EASCoefficients {
  VectorXd k0;
  MatrixXd k1;
  MatrixXd h0;
  std::vector<MatrixXd> h1;
  MatrixXd l0hat;  // l0 + h0
  std::vector<MatrixXd> l1hat;
  std::function<double(double, const VectorXd&)> p0;
  std::function<VectorXd(double, const VectorXd&)> p1;
  std::function<double(double, const VectorXd&)> q0;
  std::function<VectorXd(double, const VectorXd&)> q1;
  std::function<VectorXd(double, const VectorXd&)> g0;
  std::function<MatrixXd(double, const VectorXd&)> g1;
};

EASCoefficients extract_eas(const MarketModel& model, const ConstraintSet& K,
                            double bRisk);

/// The generic exponent ODEs driven by extracted coefficients; reproduces the
/// specialized rhs when the extraction is correct.
RhsValue generic_rhs(const EASCoefficients& c, double bRisk, double T,
                     double tau, const VectorXd& B);

struct EASReport {
  std::vector<std::string> quantity;
  std::vector<double> maxSecondDiff;  // relative
  bool pass = false;
  std::string failed;  // first quantity above threshold, empty if none
};

/// Numeric affinity probe: second differences of the six condition
/// quantities along random collinear z-triples at random (t, B).
EASReport eas_probe(const MarketModel& model, const ConstraintSet& K,
                    double bRisk, int samples, uint64_t seed);

}  // namespace portopt
