#pragma once

// Successive projection driver. One iteration applies a single projection
// chosen by the selection rule; the mean rule instead averages all m
// projections and accounts for m projection evaluations per step.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "spsolve/core.hpp"
#include "spsolve/projections.hpp"
#include "spsolve/rng.hpp"
#include "spsolve/selection.hpp"

namespace spsolve {

enum class SolveStatus { Converged, MaxIterations, Diverged };

struct SolverConfig {
  Variant rule = Variant::Cyclic;
  /// Stop when the positive-part residual infinity norm falls to tol.
  double tol = 1e-10;
  /// Budget in single projection evaluations; a mean step consumes m.
  long max_iterations = 100000;
  std::uint64_t seed = 0;
  bool record_trace = true;
  /// Additionally store every iterate (memory-heavy; off by default).
  bool record_iterates = false;
  /// Override of the per-constraint gradient norms for the normalized
  /// greedy rule, for constraint families without a closed-form table entry.
  std::optional<Vector> ngp_norms;
};

struct TraceRecord {
  long k;               // 0-based step ordinal
  int index;            // chosen constraint, -1 for a mean step
  double residual_inf;  // positive-part residual norms after the step
  double residual_two;
};

struct IterateTrace {
  Vector initial_point;
  Vector final_point;
  double initial_residual_inf = 0.0;
  double initial_residual_two = 0.0;
  double initial_error = std::numeric_limits<double>::quiet_NaN();
  std::vector<TraceRecord> records;
  /// ||x^{k+1} - x*|| per record; empty when no solution is known.
  std::vector<double> errors;
  /// Per-record iterates; filled only with SolverConfig::record_iterates.
  std::vector<Vector> iterates;
};

struct SolveResult {
  Vector x;
  SolveStatus status = SolveStatus::MaxIterations;
  long projections_used = 0;
  IterateTrace trace;
};

/// One projection step onto constraint `index`.
inline Vector sp_step(const ProblemInstance& p, const Vector& x, int index) {
  detail::require(index >= 0 && index < p.num_constraints(),
                  "sp_step: index out of range");
  return project(p.constraint(index), x);
}

/// One mean step: the average of the projections onto all m constraints.
inline Vector mp_step(const ProblemInstance& p, const Vector& x) {
  Vector acc = Vector::Zero(p.dim());
  for (int i = 0; i < p.num_constraints(); ++i)
    acc += project(p.constraint(i), x);
  return acc / static_cast<double>(p.num_constraints());
}

/// Called with (projections so far, current iterate) at the start and after
/// every full sweep worth of projections (k a multiple of m).
using CycleObserver = std::function<void(long, const Vector&)>;

namespace detail {

inline double positive_part_inf(const Vector& r) {
  return r.size() ? r.cwiseAbs().maxCoeff() : 0.0;
}

}  // namespace detail

/// Runs successive projections from x0 until the residual criterion, the
/// iteration budget, or divergence (non-finite iterate or norm above 1e12).
/// On divergence the result carries the last finite iterate and trace.
inline SolveResult sp_solve(const ProblemInstance& p, const Vector& x0,
                            const SolverConfig& config,
                            const CycleObserver& observer = {}) {
  detail::require(config.tol > 0.0, "tol must be positive");
  detail::require(config.max_iterations >= 0,
                  "max_iterations must be nonnegative");
  detail::require(x0.size() == p.dim(), "x0 dimension must match the problem");
  detail::require(x0.allFinite(), "x0 must be finite");

  const int m = p.num_constraints();
  SelectionRule rule =
      (config.rule == Variant::NormalizedGreedy && config.ngp_norms)
          ? SelectionRule::normalized_greedy(*config.ngp_norms)
          : SelectionRule::for_problem(config.rule, p);
  RngStream rng = RngStream::substream(config.seed, 0);

  const bool mean_rule = config.rule == Variant::Mean;
  const bool need_residuals = config.record_trace || rule.needs_residuals();
  const Vector* x_star =
      p.known_solution() ? &*p.known_solution() : nullptr;

  SolveResult result;
  result.x = x0;
  result.trace.initial_point = x0;

  Vector res;  // current residual vector, tracked only when needed
  if (need_residuals || config.record_trace) res = residual_vector(p, result.x);
  if (config.record_trace) {
    result.trace.initial_residual_inf = detail::positive_part_inf(res);
    result.trace.initial_residual_two = res.norm();
    if (x_star) result.trace.initial_error = (result.x - *x_star).norm();
  }

  auto converged = [&](const Vector& x) {
    if (need_residuals) return detail::positive_part_inf(res) <= config.tol;
    return residuals_within(p, x, config.tol);
  };

  if (observer) observer(0, result.x);
  if (converged(result.x)) {
    result.status = SolveStatus::Converged;
    result.trace.final_point = result.x;
    return result;
  }

  long step = 0;
  while (result.projections_used < config.max_iterations) {
    int index = -1;
    Vector next;
    if (mean_rule) {
      if (config.max_iterations - result.projections_used < m) break;
      next = mp_step(p, result.x);
      result.projections_used += m;
    } else {
      index = rule.next_index(res, step, rng);
      next = sp_step(p, result.x, index);
      result.projections_used += 1;
    }

    if (!next.allFinite() || next.norm() > 1e12) {
      result.status = SolveStatus::Diverged;
      result.trace.final_point = result.x;
      return result;
    }
    result.x = std::move(next);
    if (need_residuals) res = residual_vector(p, result.x);

    if (config.record_trace) {
      TraceRecord rec;
      rec.k = step;
      rec.index = index;
      rec.residual_inf = detail::positive_part_inf(res);
      rec.residual_two = res.norm();
      result.trace.records.push_back(rec);
      if (x_star) result.trace.errors.push_back((result.x - *x_star).norm());
      if (config.record_iterates) result.trace.iterates.push_back(result.x);
    }
    ++step;

    if (observer && result.projections_used % m == 0)
      observer(result.projections_used, result.x);

    if (converged(result.x)) {
      result.status = SolveStatus::Converged;
      result.trace.final_point = result.x;
      return result;
    }
  }

  result.status = SolveStatus::MaxIterations;
  result.trace.final_point = result.x;
  return result;
}

/// Start point x* + delta * g / ||g|| with standard Gaussian g when the
/// problem carries a known solution; a plain standard Gaussian point
/// otherwise (delta is ignored in that case).
inline Vector perturbed_start(const ProblemInstance& p, double delta,
                              RngStream& rng) {
  detail::require(delta >= 0.0, "delta must be nonnegative");
  Vector g = gaussian_vector(p.dim(), rng);
  if (!p.known_solution()) return g;
  double nrm = g.norm();
  while (nrm == 0.0) {
    g = gaussian_vector(p.dim(), rng);
    nrm = g.norm();
  }
  return *p.known_solution() + (delta / nrm) * g;
}

}  // namespace spsolve
