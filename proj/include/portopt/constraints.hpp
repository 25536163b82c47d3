#pragma once

#include <Eigen/Dense>
#include <limits>
#include <memory>
#include <variant>
#include <vector>

namespace portopt {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Absolute tolerance for membership / projection boundary checks.
inline constexpr double kBoundaryTol = 1e-12;

class ConstraintSet;

namespace constraint_detail {

struct FullSpace {
  int dim;
};

// Axis-aligned box; entries may be +-inf. lower_i < upper_i required.
struct Box {
  VectorXd lower;
  VectorXd upper;
};

struct NonNegOrthant {
  int dim;
};

// Convex hull of a finite vertex set (rows of `vertices`).
// Requires >= d+1 vertices whose affine hull is R^d.
struct PolytopeV {
  MatrixXd vertices;  // n x d, one vertex per row
};

struct Product {
  std::vector<ConstraintSet> children;
};

using Variant = std::variant<FullSpace, Box, NonNegOrthant, PolytopeV, Product>;

}  // namespace constraint_detail

/// A closed convex set K in R^d with exact support-function, membership and
/// Euclidean-projection primitives. Immutable after construction; all
/// operations are pure and thread-safe.
class ConstraintSet {
 public:
  static ConstraintSet full_space(int dim);
  static ConstraintSet box(VectorXd lower, VectorXd upper);
  static ConstraintSet nonneg_orthant(int dim);
  static ConstraintSet polytope(MatrixXd vertices);
  static ConstraintSet product(std::vector<ConstraintSet> children);

  int dim() const { return dim_; }

  /// Support function delta_K(lam) = sup_{x in K} (-x'lam). May return +inf.
  double support(const VectorXd& lam) const;

  /// Closed-set membership (boundary counts, tolerance kBoundaryTol).
  bool contains(const VectorXd& x) const;

  /// Euclidean projection argmin_{y in K} ||y - x||.
  VectorXd project(const VectorXd& x) const;

  bool is_full_space() const;
  bool is_product() const;
  const std::vector<ConstraintSet>& children() const;

  /// Restriction of a separable set to one block of a dimension split.
  /// Valid for Product (child i), FullSpace, Box and NonNegOrthant slices;
  /// throws for coupled variants (PolytopeV).
  ConstraintSet block(const std::vector<int>& block_dims, int i) const;

  const constraint_detail::Variant& raw() const { return *node_; }

 private:
  explicit ConstraintSet(constraint_detail::Variant v);

  std::shared_ptr<const constraint_detail::Variant> node_;
  int dim_ = 0;
};

}  // namespace portopt
