#pragma once

// Problem representation: constraint variants, residual and gradient
// evaluation, and closed-form gradient norms at a feasible point.
//
// Complex problems of dimension n are stored in their real 2n embedding
// [Re(x); Im(x)]; residuals and gradients are always real. dim() of a
// ConstraintSpec or ProblemInstance is the ambient real dimension.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "spsolve/rng.hpp"

namespace spsolve {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Field { Real, Complex };

enum class Relation { Equality, Inequality };

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void require_finite(const Vector& v, const char* what) {
  require(v.allFinite(), std::string(what) + " must have finite entries");
}

inline void require_finite(double x, const char* what) {
  require(std::isfinite(x), std::string(what) + " must be finite");
}

}  // namespace detail

/// Value of a complex scalar held as (re, im).
struct ComplexScalar {
  double re = 0.0;
  double im = 0.0;
  double abs() const { return std::hypot(re, im); }
};

/// a^H x over the stated field. For Field::Complex both vectors are real
/// embeddings [Re; Im] of equal even length; for Field::Real the imaginary
/// part is identically zero.
inline ComplexScalar hermitian_inner(const Vector& a, const Vector& x,
                                     Field field) {
  if (field == Field::Real) return {a.dot(x), 0.0};
  const Eigen::Index n = a.size() / 2;
  const auto ar = a.head(n), ai = a.tail(n);
  const auto xr = x.head(n), xi = x.tail(n);
  return {ar.dot(xr) + ai.dot(xi), ar.dot(xi) - ai.dot(xr)};
}

/// Real embedding of (w.re + j w.im) * a, with a itself embedded.
inline Vector complex_scale(ComplexScalar w, const Vector& a, Field field) {
  if (field == Field::Real) return w.re * a;
  const Eigen::Index n = a.size() / 2;
  Vector out(a.size());
  out.head(n) = w.re * a.head(n) - w.im * a.tail(n);
  out.tail(n) = w.re * a.tail(n) + w.im * a.head(n);
  return out;
}

// --- constraint variants ------------------------------------------------

/// a^T x = b with a != 0.
struct Hyperplane {
  Vector a;
  double b;
};

/// a^T x <= b with a != 0.
struct HalfSpace {
  Vector a;
  double b;
};

/// ||x - c||^2 = r^2 with r > 0.
struct Sphere {
  Vector c;
  double r;
};

/// ||x - c||^2 <= r^2 with r > 0.
struct Ball {
  Vector c;
  double r;
};

/// |a^H x|^2 = b^2 with a != 0, b >= 0. For Field::Complex, `a` is stored
/// in the real embedding and the ambient dimension is even.
struct EllipsoidSurface {
  Vector a;
  double b;
  Field field;
};

/// ||x_i - x_j||^2 = r^2 between two point blocks of a stacked
/// configuration x = [x_1; ...; x_p], each block of length point_dim.
struct PairwiseDistance {
  int i;
  int j;
  double r;
  int point_dim;
  int num_points;
};

/// x in range(A) for A with full column rank. The orthogonal projector
/// A (A^T A)^{-1} A^T is computed once at construction and cached.
struct Subspace {
  Matrix basis;
  Matrix projector;
};

class ConstraintSpec {
 public:
  using Payload = std::variant<Hyperplane, HalfSpace, Sphere, Ball,
                               EllipsoidSurface, PairwiseDistance, Subspace>;

  static ConstraintSpec hyperplane(Vector a, double b) {
    validate_normal(a, b);
    const int n = static_cast<int>(a.size());
    return ConstraintSpec(Hyperplane{std::move(a), b}, Relation::Equality, n);
  }

  static ConstraintSpec half_space(Vector a, double b) {
    validate_normal(a, b);
    const int n = static_cast<int>(a.size());
    return ConstraintSpec(HalfSpace{std::move(a), b}, Relation::Inequality, n);
  }

  static ConstraintSpec sphere(Vector c, double r) {
    validate_center(c, r);
    const int n = static_cast<int>(c.size());
    return ConstraintSpec(Sphere{std::move(c), r}, Relation::Equality, n);
  }

  static ConstraintSpec ball(Vector c, double r) {
    validate_center(c, r);
    const int n = static_cast<int>(c.size());
    return ConstraintSpec(Ball{std::move(c), r}, Relation::Inequality, n);
  }

  static ConstraintSpec ellipsoid_surface(Vector a, double b,
                                          Field field = Field::Real) {
    detail::require_finite(a, "ellipsoid normal");
    detail::require_finite(b, "ellipsoid offset");
    detail::require(a.size() > 0 && a.norm() > 0.0,
                    "ellipsoid normal must be nonzero");
    detail::require(b >= 0.0, "ellipsoid offset must be nonnegative");
    detail::require(field == Field::Real || a.size() % 2 == 0,
                    "complex ellipsoid needs an even embedded dimension");
    const int n = static_cast<int>(a.size());
    return ConstraintSpec(EllipsoidSurface{std::move(a), b, field},
                          Relation::Equality, n);
  }

  static ConstraintSpec pairwise_distance(int i, int j, double r,
                                          int point_dim, int num_points) {
    detail::require(point_dim > 0 && num_points > 1,
                    "pairwise constraint needs at least two points");
    detail::require(i >= 0 && j >= 0 && i < num_points && j < num_points,
                    "pairwise indices out of range");
    detail::require(i != j, "pairwise indices must differ");
    detail::require_finite(r, "pairwise distance");
    detail::require(r > 0.0, "pairwise distance must be positive");
    return ConstraintSpec(PairwiseDistance{i, j, r, point_dim, num_points},
                          Relation::Equality, point_dim * num_points);
  }

  static ConstraintSpec subspace(Matrix A) {
    detail::require(A.size() > 0 && A.allFinite(),
                    "subspace basis must be nonempty and finite");
    detail::require(A.rows() >= A.cols(), "subspace basis must be tall");
    Eigen::ColPivHouseholderQR<Matrix> qr(A);
    detail::require(qr.rank() == A.cols(),
                    "subspace basis must have full column rank");
    Matrix At = A.transpose();
    Matrix projector = A * (At * A).ldlt().solve(At);
    const int n = static_cast<int>(A.rows());
    return ConstraintSpec(Subspace{std::move(A), std::move(projector)},
                          Relation::Equality, n);
  }

  Relation relation() const { return relation_; }
  int dim() const { return dim_; }
  const Payload& payload() const { return payload_; }

  template <class T>
  const T& as() const {
    return std::get<T>(payload_);
  }

  template <class T>
  bool holds() const {
    return std::holds_alternative<T>(payload_);
  }

 private:
  ConstraintSpec(Payload payload, Relation relation, int dim)
      : payload_(std::move(payload)), relation_(relation), dim_(dim) {}

  static void validate_normal(const Vector& a, double b) {
    detail::require_finite(a, "normal vector");
    detail::require_finite(b, "offset");
    detail::require(a.size() > 0 && a.norm() > 0.0,
                    "normal vector must be nonzero");
  }

  static void validate_center(const Vector& c, double r) {
    detail::require_finite(c, "center");
    detail::require_finite(r, "radius");
    detail::require(c.size() > 0, "center must be nonempty");
    detail::require(r > 0.0, "radius must be positive");
  }

  Payload payload_;
  Relation relation_;
  int dim_;
};

// --- residuals and gradients --------------------------------------------

/// Raw constraint value f_i(x); the inequality sense is applied by
/// residual_vector, not here.
inline double residual(const ConstraintSpec& spec, const Vector& x) {
  detail::require(x.size() == spec.dim(), "residual: dimension mismatch");
  struct Eval {
    const Vector& x;
    double operator()(const Hyperplane& h) const { return h.a.dot(x) - h.b; }
    double operator()(const HalfSpace& h) const { return h.a.dot(x) - h.b; }
    double operator()(const Sphere& s) const {
      return (x - s.c).squaredNorm() - s.r * s.r;
    }
    double operator()(const Ball& s) const {
      return (x - s.c).squaredNorm() - s.r * s.r;
    }
    double operator()(const EllipsoidSurface& e) const {
      const ComplexScalar w = hermitian_inner(e.a, x, e.field);
      return w.re * w.re + w.im * w.im - e.b * e.b;
    }
    double operator()(const PairwiseDistance& p) const {
      const auto xi = x.segment(p.i * p.point_dim, p.point_dim);
      const auto xj = x.segment(p.j * p.point_dim, p.point_dim);
      return (xi - xj).squaredNorm() - p.r * p.r;
    }
    double operator()(const Subspace& s) const {
      return (x - s.projector * x).norm();
    }
  };
  return std::visit(Eval{x}, spec.payload());
}

/// Gradient of f_i at x in the ambient real coordinates.
///
/// For a complex EllipsoidSurface this is the embedded Wirtinger gradient
/// d f / d conj(x) = a (a^H x), whose norm at a feasible point is b*||a||; the
/// full real-embedding gradient is exactly twice this vector. The same
/// convention (half of the squared-modulus gradient) is applied to the real
/// case so both fields agree. Subspace constraints use the distance
/// function, so the gradient is the unit outward direction and is undefined
/// (zero is returned) on the subspace itself.
inline Vector gradient(const ConstraintSpec& spec, const Vector& x) {
  detail::require(x.size() == spec.dim(), "gradient: dimension mismatch");
  struct Eval {
    const Vector& x;
    Vector operator()(const Hyperplane& h) const { return h.a; }
    Vector operator()(const HalfSpace& h) const { return h.a; }
    Vector operator()(const Sphere& s) const { return 2.0 * (x - s.c); }
    Vector operator()(const Ball& s) const { return 2.0 * (x - s.c); }
    Vector operator()(const EllipsoidSurface& e) const {
      const ComplexScalar w = hermitian_inner(e.a, x, e.field);
      return complex_scale(w, e.a, e.field);
    }
    Vector operator()(const PairwiseDistance& p) const {
      Vector g = Vector::Zero(x.size());
      const Vector d = x.segment(p.i * p.point_dim, p.point_dim) -
                       x.segment(p.j * p.point_dim, p.point_dim);
      g.segment(p.i * p.point_dim, p.point_dim) = 2.0 * d;
      g.segment(p.j * p.point_dim, p.point_dim) = -2.0 * d;
      return g;
    }
    Vector operator()(const Subspace& s) const {
      const Vector d = x - s.projector * x;
      const double dist = d.norm();
      if (dist <= 1e-12 * (1.0 + x.norm())) return Vector::Zero(x.size());
      return d / dist;
    }
  };
  return std::visit(Eval{x}, spec.payload());
}

// Closed-form gradient norms at a feasible point, by constraint family.
// The unsquared forms |a^T x - b| = 0 and | |a^H x| - b | = 0 have no
// dedicated ConstraintSpec variant but their constants are part of the
// same table.

inline double linear_gradient_norm(double a_norm) { return a_norm; }

inline double circle_gradient_norm(double r) { return 2.0 * r; }

inline double unsquared_circle_gradient_norm() { return 1.0; }

inline double elliptic_gradient_norm(double a_norm, double b) {
  return b * a_norm;
}

inline double unsquared_elliptic_gradient_norm() { return 0.5; }

/// ||grad f_i(x*)|| for any feasible x*, from the table above. Errors for
/// families without a solution-independent closed form.
inline double gradient_norm_at_solution(const ConstraintSpec& spec) {
  struct Eval {
    double operator()(const Hyperplane& h) const {
      return linear_gradient_norm(h.a.norm());
    }
    double operator()(const HalfSpace& h) const {
      return linear_gradient_norm(h.a.norm());
    }
    double operator()(const Sphere& s) const {
      return circle_gradient_norm(s.r);
    }
    double operator()(const Ball& s) const { return circle_gradient_norm(s.r); }
    double operator()(const EllipsoidSurface& e) const {
      return elliptic_gradient_norm(e.a.norm(), e.b);
    }
    double operator()(const PairwiseDistance&) const {
      throw std::domain_error(
          "pairwise constraint has no closed-form gradient norm; it depends "
          "on the configuration");
    }
    double operator()(const Subspace&) const {
      throw std::domain_error(
          "subspace constraint has no closed-form gradient norm at a "
          "feasible point");
    }
  };
  return std::visit(Eval{}, spec.payload());
}

// --- problem instances ----------------------------------------------------

class ProblemInstance {
 public:
  ProblemInstance(int dim, Field field, std::vector<ConstraintSpec> constraints,
                  std::optional<Vector> known_solution = std::nullopt)
      : dim_(dim),
        field_(field),
        constraints_(std::move(constraints)),
        known_solution_(std::move(known_solution)) {
    detail::require(dim_ > 0, "problem dimension must be positive");
    detail::require(field_ == Field::Real || dim_ % 2 == 0,
                    "complex problems need an even embedded dimension");
    detail::require(!constraints_.empty(),
                    "problem needs at least one constraint");
    for (const auto& c : constraints_)
      detail::require(c.dim() == dim_,
                      "constraint dimension must match the problem");
    if (known_solution_) {
      detail::require_finite(*known_solution_, "known solution");
      detail::require(known_solution_->size() == dim_,
                      "known solution dimension must match the problem");
      for (std::size_t i = 0; i < constraints_.size(); ++i) {
        const double f = residual(constraints_[i], *known_solution_);
        const bool ok = constraints_[i].relation() == Relation::Equality
                            ? std::abs(f) <= 1e-9
                            : f <= 1e-9;
        detail::require(ok, "known solution violates constraint " +
                                std::to_string(i));
      }
    }
  }

  int dim() const { return dim_; }
  Field field() const { return field_; }
  int num_constraints() const { return static_cast<int>(constraints_.size()); }
  const std::vector<ConstraintSpec>& constraints() const { return constraints_; }
  const ConstraintSpec& constraint(int i) const {
    return constraints_.at(static_cast<std::size_t>(i));
  }
  const std::optional<Vector>& known_solution() const {
    return known_solution_;
  }

 private:
  int dim_;
  Field field_;
  std::vector<ConstraintSpec> constraints_;
  std::optional<Vector> known_solution_;
};

/// Stacked residuals with the inequality sense applied: equality rows carry
/// f_i(x), inequality rows carry max(f_i(x), 0).
inline Vector residual_vector(const ProblemInstance& p, const Vector& x) {
  Vector r(p.num_constraints());
  for (int i = 0; i < p.num_constraints(); ++i) {
    const double f = residual(p.constraint(i), x);
    r(i) = p.constraint(i).relation() == Relation::Inequality
               ? std::max(f, 0.0)
               : f;
  }
  return r;
}

inline double residual_inf_norm(const ProblemInstance& p, const Vector& x) {
  return residual_vector(p, x).cwiseAbs().maxCoeff();
}

/// Early-exit form of residual_inf_norm(p, x) <= tol.
inline bool residuals_within(const ProblemInstance& p, const Vector& x,
                             double tol) {
  for (int i = 0; i < p.num_constraints(); ++i) {
    double f = residual(p.constraint(i), x);
    if (p.constraint(i).relation() == Relation::Inequality) f = std::max(f, 0.0);
    if (std::abs(f) > tol) return false;
  }
  return true;
}

/// N(0, I) vector of length n.
inline Vector gaussian_vector(int n, RngStream& rng) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

}  // namespace spsolve
