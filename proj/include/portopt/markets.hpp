#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace portopt {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Scalar piecewise-linear table on an increasing time grid. Queries are
/// clamped to the grid range.
struct ScalarTable {
  VectorXd t;
  VectorXd v;

  static ScalarTable constant(double value);
  double operator()(double ti) const;
};

/// Vector-valued piecewise-linear table (one column of `v` per grid point).
struct VectorTable {
  VectorXd t;
  MatrixXd v;  // dim x n

  static VectorTable constant(VectorXd value);
  VectorXd operator()(double ti) const;
};

/// Matrix-valued piecewise-linear table.
struct MatrixTable {
  VectorXd t;
  std::vector<MatrixXd> v;

  static MatrixTable constant(MatrixXd value);
  MatrixXd operator()(double ti) const;
};

/// All market coefficients evaluated at one (t, z).
struct CoefficientFrame {
  VectorXd muZ;     // factor drift, R^m
  MatrixXd SigmaZ;  // factor diffusion, R^{m x m}
  MatrixXd rho;     // asset/factor correlation loadings, R^{m x d}
  double rShort = 0.0;
  VectorXd mu;      // asset drift, R^d
  MatrixXd Sigma;   // asset diffusion, R^{d x d}
};

/// Black-Scholes market with time-dependent deterministic coefficients and
/// no stochastic factor (m = 0).
struct BSMarket {
  ScalarTable r;
  VectorTable eta;    // market price of risk, sigma^{-1}(mu - r1) absorbed as
                      // excess drift: mu = r1 + eta
  MatrixTable sigma;  // d x d, nonsingular on the grid

  int dim() const { return int(eta.v.rows()); }
};

/// Block-diagonal CIR stochastic-volatility market: m factors, block i of
/// size d_i driven by factor z_i with dz_i = kappa_i(theta_i - z_i)dt +
/// sigmaZ_i sqrt(z_i) dW^z_i.
struct CIRMarket {
  std::vector<int> blockDims;
  VectorXd kappa;
  VectorXd theta;
  VectorXd sigmaZ;
  double rConst = 0.0;
  std::vector<VectorXd> rho;         // per-block, ||rho_i|| < 1
  std::vector<VectorXd> eta;         // per-block excess-drift loadings
  std::vector<MatrixXd> SigmaBlock;  // per-block, nonsingular

  int factors() const { return int(kappa.size()); }
  int dim() const;
};

/// Bond market on an m-dimensional OU factor with affine short rate
/// r = w0 + w1'z and tradable zero-coupon bonds maturing at T_hat_i. The
/// factor follows dz = kappa.*(theta - z)dt + sigmaMat dW^z.
struct OUMarket {
  double w0 = 0.0;
  VectorXd w1;
  VectorXd kappa;
  VectorXd theta;
  MatrixXd sigmaMat;  // m x m, nonsingular
  VectorXd etaMPR;    // constant market price of risk
  VectorXd maturities;

  int factors() const { return int(kappa.size()); }
  int dim() const { return factors(); }
};

struct MarketModel {
  std::variant<BSMarket, CIRMarket, OUMarket> body;
  double T = 1.0;
  VectorXd z0;

  int dim() const;
  int factors() const;
  bool is_bs() const { return std::holds_alternative<BSMarket>(body); }
  bool is_cir() const { return std::holds_alternative<CIRMarket>(body); }
  bool is_ou() const { return std::holds_alternative<OUMarket>(body); }
  const BSMarket& bs() const { return std::get<BSMarket>(body); }
  const CIRMarket& cir() const { return std::get<CIRMarket>(body); }
  const OUMarket& ou() const { return std::get<OUMarket>(body); }
};

/// Evaluate every coefficient function at (t, z). CIR requires z > 0
/// componentwise and raises on violation; clamping is the simulator's job.
CoefficientFrame coeffs(const MarketModel& model, double t, const VectorXd& z);

/// Zero-coupon bond exponents under the pricing measure:
/// P(t, t + tau) = exp(a(tau) + b(tau)'z).
struct BondExponents {
  double a = 0.0;
  VectorXd b;
};

BondExponents bond_exponents(const OUMarket& market, double tau);

/// The m x m matrix whose column i is b(T_hat_i - t).
MatrixXd bond_b_matrix(const OUMarket& market, double t);

struct ValidationCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  bool all_pass() const;
};

ValidationReport validate(const MarketModel& model);

}  // namespace portopt
