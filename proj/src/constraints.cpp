#include "portopt/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace portopt {

namespace cd = constraint_detail;

namespace {

void check_dim(int expected, Eigen::Index got, const char* what) {
  if (got != expected) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch, expected " +
                                std::to_string(expected) + ", got " + std::to_string(got));
  }
}

// Projection of w onto the probability simplex {w >= 0, sum w = 1}.
VectorXd project_simplex(const VectorXd& w) {
  const Eigen::Index n = w.size();
  std::vector<double> u(w.data(), w.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0;
  double tau = 0.0;
  int k = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    css += u[j];
    const double t = (css - 1.0) / double(j + 1);
    if (u[j] - t > 0.0) {
      tau = t;
      k = int(j) + 1;
    }
  }
  (void)k;
  return (w.array() - tau).cwiseMax(0.0);
}

// min_w ||V'w - x||^2 over the simplex, accelerated projected gradient.
// Returns the weight vector; the projected point is V'w.
VectorXd hull_weights(const MatrixXd& V, const VectorXd& x) {
  const Eigen::Index n = V.rows();
  const MatrixXd G = V * V.transpose();  // n x n Gram
  const VectorXd q = V * x;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(G);
  const double L = std::max(es.eigenvalues().maxCoeff(), 1e-300);

  VectorXd w = VectorXd::Constant(n, 1.0 / double(n));
  VectorXd y = w;
  double t = 1.0;
  VectorXd w_prev = w;
  for (int it = 0; it < 20000; ++it) {
    const VectorXd grad = G * y - q;
    w_prev = w;
    w = project_simplex(y - grad / L);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = w + ((t - 1.0) / t_next) * (w - w_prev);
    t = t_next;
    if ((w - w_prev).lpNorm<Eigen::Infinity>() < 1e-15) break;
  }
  return w;
}

// Equality-constrained LS on an active vertex set:
// min ||V_A' wA - x||^2 s.t. 1'wA = 1.
VectorXd active_ls(const MatrixXd& V, const std::vector<int>& act, const VectorXd& x) {
  const int k = int(act.size());
  const Eigen::Index d = V.cols();
  MatrixXd VA(k, d);
  for (int i = 0; i < k; ++i) VA.row(i) = V.row(act[size_t(i)]);
  MatrixXd KKT(k + 1, k + 1);
  KKT.topLeftCorner(k, k) = VA * VA.transpose();
  KKT.topRightCorner(k, 1).setOnes();
  KKT.bottomLeftCorner(1, k).setOnes();
  KKT(k, k) = 0.0;
  VectorXd rhs(k + 1);
  rhs.head(k) = VA * x;
  rhs[k] = 1.0;
  return KKT.fullPivLu().solve(rhs).head(k);
}

// Exact projection onto conv(vertices): Wolfe-style active-set method
// seeded with the nearest vertex; each step solves a tiny KKT system, so the
// whole call costs a handful of small dense solves.
VectorXd project_hull(const MatrixXd& V, const VectorXd& x) {
  const Eigen::Index n = V.rows();

  Eigen::Index seed = 0;
  double bestDist = (V.row(0).transpose() - x).squaredNorm();
  for (Eigen::Index i = 1; i < n; ++i) {
    const double d2 = (V.row(i).transpose() - x).squaredNorm();
    if (d2 < bestDist) {
      bestDist = d2;
      seed = i;
    }
  }
  std::vector<int> act{int(seed)};
  VectorXd w = VectorXd::Zero(n);
  w[seed] = 1.0;

  for (int iter = 0; iter < 4 * int(n) + 16; ++iter) {
    VectorXd wA = active_ls(V, act, x);
    if (wA.minCoeff() < -1e-14) {
      // Step from the current feasible weights toward wA until the first
      // coordinate hits zero, then drop it from the active set.
      double alpha = 1.0;
      int drop = -1;
      for (size_t i = 0; i < act.size(); ++i) {
        const double wi = w[act[i]];
        if (wA[Eigen::Index(i)] < wi) {
          const double a = wi / (wi - wA[Eigen::Index(i)]);
          if (a < alpha) {
            alpha = a;
            drop = int(i);
          }
        }
      }
      for (size_t i = 0; i < act.size(); ++i) {
        w[act[i]] = (1.0 - alpha) * w[act[i]] + alpha * wA[Eigen::Index(i)];
      }
      if (drop >= 0) {
        w[act[size_t(drop)]] = 0.0;
        act.erase(act.begin() + drop);
      }
      continue;
    }
    // Feasible stationary point on the active face; check the remaining
    // vertices for an improving direction (v_j - y)'(x - y) > 0.
    w.setZero();
    for (size_t i = 0; i < act.size(); ++i) w[act[i]] = wA[Eigen::Index(i)];
    const VectorXd y = V.transpose() * w;
    const VectorXd res = x - y;
    int add = -1;
    double best = 1e-12 * (1.0 + res.norm());
    for (Eigen::Index j = 0; j < n; ++j) {
      if (std::find(act.begin(), act.end(), int(j)) != act.end()) continue;
      const double g = (V.row(j).transpose() - y).dot(res);
      if (g > best) {
        best = g;
        add = int(j);
      }
    }
    if (add < 0) return y;
    act.push_back(add);
  }
  // Active-set cycling safeguard: fall back to a first-order solve.
  return V.transpose() * hull_weights(V, x);
}

struct SupportVisitor {
  const VectorXd& lam;

  double operator()(const cd::FullSpace& s) const {
    check_dim(s.dim, lam.size(), "support");
    return (lam.array() == 0.0).all() ? 0.0 : kInf;
  }
  double operator()(const cd::Box& s) const {
    check_dim(int(s.lower.size()), lam.size(), "support");
    double v = 0.0;
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
      if (lam[i] > 0.0) {
        if (std::isinf(s.lower[i])) return kInf;
        v += -s.lower[i] * lam[i];
      } else if (lam[i] < 0.0) {
        if (std::isinf(s.upper[i])) return kInf;
        v += -s.upper[i] * lam[i];
      }
    }
    return v;
  }
  double operator()(const cd::NonNegOrthant& s) const {
    check_dim(s.dim, lam.size(), "support");
    return (lam.array() >= 0.0).all() ? 0.0 : kInf;
  }
  double operator()(const cd::PolytopeV& s) const {
    check_dim(int(s.vertices.cols()), lam.size(), "support");
    return (s.vertices * (-lam)).maxCoeff();
  }
  double operator()(const cd::Product& s) const {
    double v = 0.0;
    Eigen::Index off = 0;
    for (const auto& child : s.children) {
      v += child.support(lam.segment(off, child.dim()));
      if (std::isinf(v)) return kInf;
      off += child.dim();
    }
    check_dim(int(off), lam.size(), "support");
    return v;
  }
};

struct ContainsVisitor {
  const VectorXd& x;

  bool operator()(const cd::FullSpace& s) const {
    check_dim(s.dim, x.size(), "contains");
    return true;
  }
  bool operator()(const cd::Box& s) const {
    check_dim(int(s.lower.size()), x.size(), "contains");
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x[i] < s.lower[i] || x[i] > s.upper[i]) return false;
    }
    return true;
  }
  bool operator()(const cd::NonNegOrthant& s) const {
    check_dim(s.dim, x.size(), "contains");
    return (x.array() >= 0.0).all();
  }
  bool operator()(const cd::PolytopeV& s) const {
    check_dim(int(s.vertices.cols()), x.size(), "contains");
    const VectorXd p = project_hull(s.vertices, x);
    return (x - p).norm() <= kBoundaryTol * std::max(1.0, x.norm());
  }
  bool operator()(const cd::Product& s) const {
    Eigen::Index off = 0;
    for (const auto& child : s.children) {
      if (!child.contains(x.segment(off, child.dim()))) return false;
      off += child.dim();
    }
    check_dim(int(off), x.size(), "contains");
    return true;
  }
};

struct ProjectVisitor {
  const VectorXd& x;

  VectorXd operator()(const cd::FullSpace& s) const {
    check_dim(s.dim, x.size(), "project");
    return x;
  }
  VectorXd operator()(const cd::Box& s) const {
    check_dim(int(s.lower.size()), x.size(), "project");
    return x.cwiseMax(s.lower).cwiseMin(s.upper);
  }
  VectorXd operator()(const cd::NonNegOrthant& s) const {
    check_dim(s.dim, x.size(), "project");
    return x.cwiseMax(0.0);
  }
  VectorXd operator()(const cd::PolytopeV& s) const {
    check_dim(int(s.vertices.cols()), x.size(), "project");
    return project_hull(s.vertices, x);
  }
  VectorXd operator()(const cd::Product& s) const {
    VectorXd out(x.size());
    Eigen::Index off = 0;
    for (const auto& child : s.children) {
      out.segment(off, child.dim()) = child.project(x.segment(off, child.dim()));
      off += child.dim();
    }
    check_dim(int(off), x.size(), "project");
    return out;
  }
};

int variant_dim(const cd::Variant& v) {
  return std::visit(
      [](const auto& s) -> int {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, cd::FullSpace>) return s.dim;
        else if constexpr (std::is_same_v<T, cd::Box>) return int(s.lower.size());
        else if constexpr (std::is_same_v<T, cd::NonNegOrthant>) return s.dim;
        else if constexpr (std::is_same_v<T, cd::PolytopeV>) return int(s.vertices.cols());
        else {
          int d = 0;
          for (const auto& c : s.children) d += c.dim();
          return d;
        }
      },
      v);
}

}  // namespace

ConstraintSet::ConstraintSet(cd::Variant v)
    : node_(std::make_shared<const cd::Variant>(std::move(v))), dim_(variant_dim(*node_)) {}

ConstraintSet ConstraintSet::full_space(int dim) {
  if (dim < 0) throw std::invalid_argument("full_space: dim must be >= 0");
  return ConstraintSet(cd::FullSpace{dim});
}

ConstraintSet ConstraintSet::box(VectorXd lower, VectorXd upper) {
  if (lower.size() != upper.size() || lower.size() < 1) {
    throw std::invalid_argument("box: bound dimensions mismatch");
  }
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (!(lower[i] < upper[i])) {
      throw std::invalid_argument("box: requires lower_i < upper_i (non-empty interior)");
    }
    if (std::isnan(lower[i]) || std::isnan(upper[i])) {
      throw std::invalid_argument("box: NaN bound");
    }
  }
  return ConstraintSet(cd::Box{std::move(lower), std::move(upper)});
}

ConstraintSet ConstraintSet::nonneg_orthant(int dim) {
  if (dim < 1) throw std::invalid_argument("nonneg_orthant: dim must be >= 1");
  return ConstraintSet(cd::NonNegOrthant{dim});
}

ConstraintSet ConstraintSet::polytope(MatrixXd vertices) {
  const Eigen::Index n = vertices.rows();
  const Eigen::Index d = vertices.cols();
  if (n < d + 1 || d < 1) {
    throw std::invalid_argument("polytope: need at least d+1 vertices");
  }
  // Affine hull must be R^d for a non-empty interior.
  MatrixXd diff(n - 1, d);
  for (Eigen::Index i = 1; i < n; ++i) diff.row(i - 1) = vertices.row(i) - vertices.row(0);
  if (Eigen::FullPivLU<MatrixXd>(diff).rank() < d) {
    throw std::invalid_argument("polytope: vertices do not affinely span R^d");
  }
  return ConstraintSet(cd::PolytopeV{std::move(vertices)});
}

ConstraintSet ConstraintSet::product(std::vector<ConstraintSet> children) {
  if (children.empty()) throw std::invalid_argument("product: no children");
  return ConstraintSet(cd::Product{std::move(children)});
}

double ConstraintSet::support(const VectorXd& lam) const {
  return std::visit(SupportVisitor{lam}, *node_);
}

bool ConstraintSet::contains(const VectorXd& x) const {
  return std::visit(ContainsVisitor{x}, *node_);
}

VectorXd ConstraintSet::project(const VectorXd& x) const {
  return std::visit(ProjectVisitor{x}, *node_);
}

bool ConstraintSet::is_full_space() const {
  return std::holds_alternative<cd::FullSpace>(*node_);
}

bool ConstraintSet::is_product() const {
  return std::holds_alternative<cd::Product>(*node_);
}

const std::vector<ConstraintSet>& ConstraintSet::children() const {
  if (!is_product()) throw std::logic_error("children: not a product set");
  return std::get<cd::Product>(*node_).children;
}

ConstraintSet ConstraintSet::block(const std::vector<int>& block_dims, int i) const {
  int off = 0;
  for (int j = 0; j < i; ++j) off += block_dims[size_t(j)];
  const int bd = block_dims[size_t(i)];

  if (is_product()) {
    const auto& ch = children();
    if (int(ch.size()) == int(block_dims.size()) && ch[size_t(i)].dim() == bd) {
      return ch[size_t(i)];
    }
    throw std::invalid_argument("block: product structure does not match block dims");
  }
  if (const auto* fs = std::get_if<cd::FullSpace>(node_.get())) {
    (void)fs;
    return full_space(bd);
  }
  if (const auto* bx = std::get_if<cd::Box>(node_.get())) {
    return box(bx->lower.segment(off, bd), bx->upper.segment(off, bd));
  }
  if (std::holds_alternative<cd::NonNegOrthant>(*node_)) {
    return nonneg_orthant(bd);
  }
  throw std::invalid_argument("block: constraint set is not separable across blocks");
}

}  // namespace portopt
