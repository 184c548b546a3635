#pragma once

// Closed-form Euclidean projections onto the constraint sets. Each operator
// returns the nearest point of the set; degenerate inputs (projecting from a
// center or a null direction) take a fixed, documented branch so results stay
// deterministic.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

#include "spsolve/core.hpp"

namespace spsolve {

/// Threshold below which a branch-defining quantity counts as zero.
inline double degeneracy_tolerance(const Vector& z) {
  return 1e-12 * (1.0 + z.norm());
}

inline Vector project_hyperplane(const Vector& a, double b, const Vector& z) {
  return z - ((a.dot(z) - b) / a.squaredNorm()) * a;
}

/// Nearest point of the sphere ||x - c|| = r. From the center the problem
/// has no unique answer; the first coordinate axis is used.
inline Vector project_sphere(const Vector& c, double r, const Vector& z) {
  const Vector d = z - c;
  const double dist = d.norm();
  if (dist <= degeneracy_tolerance(z)) {
    Vector out = c;
    out(0) += r;
    return out;
  }
  return c + (r / dist) * d;
}

/// Nearest point of |a^H x| = b. The generic branch rescales the component
/// of z along a so the modulus becomes b; when a^H z vanishes the phase is
/// fixed at zero and the point z - (b / ||a||^2) a is returned.
inline Vector project_ellipsoid_surface(const Vector& a, double b, Field field,
                                        const Vector& z) {
  const ComplexScalar w = hermitian_inner(a, z, field);
  const double mod = w.abs();
  const double nrm2 = a.squaredNorm();
  if (mod <= degeneracy_tolerance(z)) return z - (b / nrm2) * a;
  const double scale = (1.0 - b / mod) / nrm2;
  return z - complex_scale({scale * w.re, scale * w.im}, a, field);
}

/// Nearest stacked configuration with ||x_i - x_j|| = r; only blocks i and j
/// move, symmetrically about their midpoint. Coincident blocks separate
/// along the first coordinate axis.
inline Vector project_pairwise_distance(int i, int j, double r, int point_dim,
                                        const Vector& z) {
  const Vector zi = z.segment(i * point_dim, point_dim);
  const Vector zj = z.segment(j * point_dim, point_dim);
  const Vector mid = 0.5 * (zi + zj);
  Vector u = zi - zj;
  const double dist = u.norm();
  if (dist <= degeneracy_tolerance(z)) {
    u = Vector::Zero(point_dim);
    u(0) = 1.0;
  } else {
    u /= dist;
  }
  Vector out = z;
  out.segment(i * point_dim, point_dim) = mid + (0.5 * r) * u;
  out.segment(j * point_dim, point_dim) = mid - (0.5 * r) * u;
  return out;
}

/// Orthogonal projection onto range(A) for full-column-rank A, computed from
/// scratch. ConstraintSpec::subspace caches this projector instead.
inline Vector project_subspace(const Matrix& A, const Vector& z) {
  detail::require(A.rows() == z.size(), "project_subspace: dimension mismatch");
  const Matrix At = A.transpose();
  return A * (At * A).ldlt().solve(At * z);
}

/// Projection onto the sublevel set of an inequality constraint: identity
/// when f(z) <= 0, otherwise the projection onto the boundary surface.
inline Vector project_sublevel(const ConstraintSpec& spec, const Vector& z) {
  if (const auto* h = std::get_if<HalfSpace>(&spec.payload())) {
    if (h->a.dot(z) - h->b <= 0.0) return z;
    return project_hyperplane(h->a, h->b, z);
  }
  if (const auto* s = std::get_if<Ball>(&spec.payload())) {
    if ((z - s->c).squaredNorm() - s->r * s->r <= 0.0) return z;
    return project_sphere(s->c, s->r, z);
  }
  throw std::domain_error("project_sublevel: spec is not an inequality");
}

namespace detail {

// Scale of the residual for the exact-fixed-point test in project().
inline double residual_scale(const ConstraintSpec& spec, const Vector& z) {
  struct Eval {
    const Vector& z;
    double operator()(const Hyperplane& h) const {
      return std::abs(h.a.dot(z)) + std::abs(h.b);
    }
    double operator()(const HalfSpace& h) const {
      return std::abs(h.a.dot(z)) + std::abs(h.b);
    }
    double operator()(const Sphere& s) const {
      return (z - s.c).squaredNorm() + s.r * s.r;
    }
    double operator()(const Ball& s) const {
      return (z - s.c).squaredNorm() + s.r * s.r;
    }
    double operator()(const EllipsoidSurface& e) const {
      const ComplexScalar w = hermitian_inner(e.a, z, e.field);
      return w.re * w.re + w.im * w.im + e.b * e.b;
    }
    double operator()(const PairwiseDistance& p) const {
      const auto zi = z.segment(p.i * p.point_dim, p.point_dim);
      const auto zj = z.segment(p.j * p.point_dim, p.point_dim);
      return (zi - zj).squaredNorm() + p.r * p.r;
    }
    double operator()(const Subspace&) const { return z.norm(); }
  };
  return std::visit(Eval{z}, spec.payload());
}

}  // namespace detail

/// Projection onto the set described by `spec`. Feasible points are returned
/// unchanged; infeasible points dispatch to the closed forms above.
inline Vector project(const ConstraintSpec& spec, const Vector& z) {
  detail::require(z.size() == spec.dim(), "project: dimension mismatch");
  detail::require(z.allFinite(), "project: input must be finite");
  if (spec.relation() == Relation::Inequality) return project_sublevel(spec, z);

  const double f = residual(spec, z);
  if (std::abs(f) <= 1e-13 * (1.0 + detail::residual_scale(spec, z))) return z;

  struct Eval {
    const Vector& z;
    Vector operator()(const Hyperplane& h) const {
      return project_hyperplane(h.a, h.b, z);
    }
    Vector operator()(const HalfSpace& h) const {
      return project_hyperplane(h.a, h.b, z);  // unreachable; kept total
    }
    Vector operator()(const Sphere& s) const {
      return project_sphere(s.c, s.r, z);
    }
    Vector operator()(const Ball& s) const {
      return project_sphere(s.c, s.r, z);  // unreachable; kept total
    }
    Vector operator()(const EllipsoidSurface& e) const {
      return project_ellipsoid_surface(e.a, e.b, e.field, z);
    }
    Vector operator()(const PairwiseDistance& p) const {
      return project_pairwise_distance(p.i, p.j, p.r, p.point_dim, z);
    }
    Vector operator()(const Subspace& s) const { return s.projector * z; }
  };
  return std::visit(Eval{z}, spec.payload());
}

}  // namespace spsolve
