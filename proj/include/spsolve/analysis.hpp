#pragma once

// Local rate analysis at a feasible point: gradient matrices, condition
// numbers, Hoffman-type constants, predicted per-step contraction factors,
// and diagnostic checks that tie the linearized theory to the iteration.
//
// Symmetric eigenproblems go through Eigen::SelfAdjointEigenSolver and
// orthonormalizations through Eigen::JacobiSVD / Householder QR; all are
// deterministic, so repeated runs produce identical reports.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spsolve/core.hpp"
#include "spsolve/projections.hpp"
#include "spsolve/rng.hpp"
#include "spsolve/selection.hpp"
#include "spsolve/solver.hpp"

namespace spsolve {

struct HoffmanInterval {
  double lower = 0.0;
  double upper = 0.0;
};

struct RateInterval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Gradient matrix G: column i is grad f_i(x_star). Errors if some gradient
/// vanishes at x_star or x_star is far from feasible.
inline Matrix build_G(const ProblemInstance& p, const Vector& x_star) {
  detail::require(x_star.size() == p.dim(), "build_G: dimension mismatch");
  detail::require(
      residual_inf_norm(p, x_star) <= 1e-8 * (1.0 + x_star.squaredNorm()),
      "build_G: x_star is not feasible");
  Matrix G(p.dim(), p.num_constraints());
  for (int i = 0; i < p.num_constraints(); ++i) {
    G.col(i) = gradient(p.constraint(i), x_star);
    if (G.col(i).norm() <= 1e-14 * (1.0 + x_star.norm()))
      throw std::domain_error("constraint " + std::to_string(i) +
                              " has zero gradient at the solution");
  }
  return G;
}

/// Normalized gradient matrix U: unit columns grad f_i(x*) / ||grad f_i(x*)||.
inline Matrix build_U(const ProblemInstance& p, const Vector& x_star) {
  Matrix U = build_G(p, x_star);
  for (int i = 0; i < U.cols(); ++i) U.col(i).normalize();
  return U;
}

/// Smallest singular value through the Gram matrix of the smaller side.
inline double smallest_singular_value(const Matrix& M) {
  const Matrix gram = M.cols() <= M.rows()
                          ? Matrix(M.transpose() * M)
                          : Matrix(M * M.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
  return std::sqrt(std::max(0.0, es.eigenvalues()(0)));
}

/// Frobenius-scaled condition number ||M||_F / sigma_min(M).
inline double condition_number(const Matrix& M) {
  const double fro = M.norm();
  const double sigma = smallest_singular_value(M);
  if (sigma < 1e-14 * fro)
    throw std::domain_error("condition_number: matrix is ill-conditioned");
  return fro / sigma;
}

/// Largest column 2-norm; the (2, inf) operator norm of the transpose.
inline double max_column_norm(const Matrix& M) {
  return M.colwise().norm().maxCoeff();
}

namespace detail {

inline double hoffman_objective(const Matrix& Mt, const Vector& v) {
  return (Mt * v).cwiseAbs().maxCoeff();
}

/// Orthonormal basis of the tangent space at unit v.
inline Matrix tangent_basis(const Vector& v) {
  const Eigen::Index n = v.size();
  Eigen::HouseholderQR<Matrix> qr{Matrix(v)};
  const Matrix Q = qr.householderQ() * Matrix::Identity(n, n);
  return Q.rightCols(n - 1);
}

/// Projected subgradient descent of ||Mt v||_inf on the unit sphere.
inline Vector hoffman_descent(const Matrix& Mt, Vector v, int iters) {
  Vector best = v;
  double best_f = hoffman_objective(Mt, v);
  for (int t = 0; t < iters; ++t) {
    const Vector scores = Mt * v;
    Eigen::Index row;
    scores.cwiseAbs().maxCoeff(&row);
    const double sign = scores(row) >= 0.0 ? 1.0 : -1.0;
    Vector g = sign * Mt.row(row).transpose();
    g -= g.dot(v) * v;
    const double gn = g.norm();
    if (gn < 1e-15) break;
    v = (v - (0.3 * std::pow(0.97, t) / gn) * g).normalized();
    const double f = hoffman_objective(Mt, v);
    if (f < best_f) {
      best_f = f;
      best = v;
    }
  }
  return best;
}

/// Derivative-free pattern descent on the sphere; handles the kinks of the
/// max objective. Returns the best value reached from v.
inline double hoffman_polish(const Matrix& Mt, Vector v, long eval_budget) {
  double best = hoffman_objective(Mt, v);
  double alpha = 0.05;
  long evals = 0;
  while (alpha > 1e-13 && evals < eval_budget) {
    const Matrix B = tangent_basis(v);
    bool improved = false;
    for (Eigen::Index c = 0; c < B.cols() && evals < eval_budget; ++c) {
      for (const double s : {1.0, -1.0}) {
        const Vector w = (v + s * alpha * B.col(c)).normalized();
        const double f = hoffman_objective(Mt, w);
        ++evals;
        if (f < best) {
          best = f;
          v = w;
          improved = true;
        }
      }
    }
    if (!improved) alpha *= 0.5;
  }
  return best;
}

}  // namespace detail

/// Bracket for h_inf(Mt) = min_{||v||=1} ||Mt v||_inf. The lower bound is
/// the exact sigma_min(Mt) / sqrt(m); the upper bound is the best point found
/// by dense sampling (n <= 3), multistart subgradient descent, and pattern
/// polish, so it is an attained objective value.
inline HoffmanInterval hoffman_inf(const Matrix& Mt, int restarts = 16,
                                   std::uint64_t seed = 0x5f0fda3ull) {
  const Eigen::Index m = Mt.rows(), n = Mt.cols();
  detail::require(m >= n && n >= 1, "hoffman_inf: need at least n rows");
  const double sigma = smallest_singular_value(Mt);
  if (sigma < 1e-12 * Mt.norm())
    throw std::domain_error("hoffman_inf: rank-deficient input");
  HoffmanInterval out;
  out.lower = sigma / std::sqrt(static_cast<double>(m));

  if (n == 1) {
    out.upper = Mt.col(0).cwiseAbs().maxCoeff();
    return out;
  }

  // Candidate minimizers: best-separated dense-grid points plus descent
  // restarts. Each candidate is polished; the smallest value wins.
  std::vector<Vector> candidates;
  auto add_separated = [&](const Vector& v) {
    for (const auto& c : candidates)
      if (std::abs(c.dot(v)) > 0.999) return;
    candidates.push_back(v);
  };

  if (n == 2) {
    const int K = 1 << 15;
    std::vector<double> f(K);
    for (int i = 0; i < K; ++i) {
      const double th = std::numbers::pi * i / K;
      f[i] = detail::hoffman_objective(
          Mt, Vector{{std::cos(th), std::sin(th)}});
    }
    std::vector<int> order(K);
    for (int i = 0; i < K; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return f[a] < f[b]; });
    for (int i = 0; i < K && candidates.size() < 8; ++i) {
      const double th = std::numbers::pi * order[i] / K;
      add_separated(Vector{{std::cos(th), std::sin(th)}});
    }
  } else if (n == 3) {
    const int N = 60000;
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    Matrix pts(3, N);
    std::vector<double> f(N);
    for (int i = 0; i < N; ++i) {
      const double z = 1.0 - 2.0 * (i + 0.5) / N;
      const double rad = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double ph = golden * i;
      pts.col(i) = Vector{{rad * std::cos(ph), rad * std::sin(ph), z}};
      f[i] = detail::hoffman_objective(Mt, pts.col(i));
    }
    std::vector<int> order(N);
    for (int i = 0; i < N; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return f[a] < f[b]; });
    for (int i = 0; i < N && candidates.size() < 8; ++i)
      add_separated(pts.col(order[i]));
  }

  RngStream rng(seed);
  for (int r = 0; r < restarts; ++r) {
    Vector v0 = gaussian_vector(static_cast<int>(n), rng);
    while (v0.norm() == 0.0) v0 = gaussian_vector(static_cast<int>(n), rng);
    v0.normalize();
    add_separated(detail::hoffman_descent(Mt, v0, 300));
  }

  const long budget = n <= 3 ? 40000 : 8000;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& v : candidates)
    best = std::min(best, detail::hoffman_polish(Mt, v, budget));
  out.upper = std::max(best, out.lower);
  return out;
}

namespace detail {

inline double clamp01(double x) { return std::max(0.0, std::min(1.0, x)); }

inline double rate_from_kappa(double kappa) {
  return std::sqrt(clamp01(1.0 - 1.0 / (kappa * kappa)));
}

}  // namespace detail

/// Predicted per-step contraction factor near the solution. Mean and
/// uniform-random steps contract with the condition number of U,
/// gradient-weighted random steps with that of G, and the greedy rules
/// with Hoffman constants, which are only known as intervals. Cyclic and
/// per-cycle-permuted orders admit no closed form here and return nullopt.
/// Random-rule factors apply to the expected squared error per projection;
/// greedy factors bound the error per projection.
inline std::optional<RateInterval> asymptotic_rate(Variant v, const Matrix& U,
                                                   const Matrix& G,
                                                   int hoffman_restarts = 16) {
  switch (v) {
    case Variant::Mean:
    case Variant::RandomUniform: {
      const double r = detail::rate_from_kappa(condition_number(U));
      return RateInterval{r, r};
    }
    case Variant::NonUniformRandom: {
      const double r = detail::rate_from_kappa(condition_number(G));
      return RateInterval{r, r};
    }
    case Variant::NormalizedGreedy: {
      const HoffmanInterval h = hoffman_inf(U.transpose(), hoffman_restarts);
      return RateInterval{
          std::sqrt(detail::clamp01(1.0 - h.upper * h.upper)),
          std::sqrt(detail::clamp01(1.0 - h.lower * h.lower))};
    }
    case Variant::Greedy: {
      const HoffmanInterval h = hoffman_inf(G.transpose(), hoffman_restarts);
      const double L = max_column_norm(G);
      return RateInterval{
          std::sqrt(detail::clamp01(1.0 - (h.upper / L) * (h.upper / L))),
          std::sqrt(detail::clamp01(1.0 - (h.lower / L) * (h.lower / L)))};
    }
    case Variant::Cyclic:
    case Variant::RandomlyPermuted:
      return std::nullopt;
  }
  return std::nullopt;
}

/// Least-squares slope fit of log(error); returns exp(slope), the fitted
/// per-record contraction factor. Uses the trailing `window` entries (all
/// when window == 0) and skips entries at or below `floor`.
inline double empirical_rate(const std::vector<double>& errors, int window = 0,
                             double floor_value = 1e-14) {
  const std::size_t total = errors.size();
  const std::size_t first =
      (window > 0 && static_cast<std::size_t>(window) < total)
          ? total - static_cast<std::size_t>(window)
          : 0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  long count = 0;
  for (std::size_t t = first; t < total; ++t) {
    if (!(errors[t] > floor_value)) continue;
    const double x = static_cast<double>(t);
    const double y = std::log(errors[t]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++count;
  }
  detail::require(count >= 2, "empirical_rate: need at least two usable points");
  const double denom = count * sxx - sx * sx;
  detail::require(denom > 0.0, "empirical_rate: degenerate abscissa");
  return std::exp((count * sxy - sx * sy) / denom);
}

inline double empirical_rate(const IterateTrace& trace, int window = 0,
                             double floor_value = 1e-14) {
  return empirical_rate(trace.errors, window, floor_value);
}

/// I - u u^T for u = g / ||g||: the derivative of a surface projection at a
/// feasible point, shared by every smooth constraint family here.
inline Matrix tangent_projector(const Vector& g) {
  const double nrm = g.norm();
  detail::require(nrm > 0.0, "tangent_projector: zero gradient");
  const Vector u = g / nrm;
  return Matrix::Identity(g.size(), g.size()) - u * u.transpose();
}

/// Max entrywise gap between the central finite-difference Jacobian of the
/// projector at feasible x_star and I - u u^T. The step defaults to
/// 1e-5 * (1 + ||x_star||).
inline double projection_jacobian_check(const ConstraintSpec& spec,
                                        const Vector& x_star, double h = 0.0) {
  const int n = spec.dim();
  if (h <= 0.0) h = 1e-5 * (1.0 + x_star.norm());
  const Matrix expected = tangent_projector(gradient(spec, x_star));
  Matrix J(n, n);
  Vector probe = x_star;
  for (int j = 0; j < n; ++j) {
    probe(j) = x_star(j) + h;
    const Vector plus = project(spec, probe);
    probe(j) = x_star(j) - h;
    const Vector minus = project(spec, probe);
    probe(j) = x_star(j);
    J.col(j) = (plus - minus) / (2.0 * h);
  }
  return (J - expected).cwiseAbs().maxCoeff();
}

/// Spectral norm of the linearized one-cycle map at x_star: the ordered
/// product of tangent projectors for cyclic (or a sampled permutation for
/// the per-cycle-permuted order), or I - U U^T / m for the mean rule.
inline double spectral_contraction_check(const ProblemInstance& p,
                                         const Vector& x_star, Variant v,
                                         std::uint64_t seed = 0) {
  const Matrix U = build_U(p, x_star);
  if (smallest_singular_value(U) < 1e-12 * U.norm())
    throw std::domain_error(
        "spectral_contraction_check: gradients are rank deficient");
  const int n = p.dim();
  const int m = p.num_constraints();
  Matrix S;
  switch (v) {
    case Variant::Mean:
      S = Matrix::Identity(n, n) -
          (U * U.transpose()) / static_cast<double>(m);
      break;
    case Variant::Cyclic:
    case Variant::RandomlyPermuted: {
      std::vector<int> order(static_cast<std::size_t>(m));
      for (int i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;
      if (v == Variant::RandomlyPermuted) {
        RngStream rng = RngStream::substream(seed, 0);
        order = rng.permutation(m);
      }
      S = Matrix::Identity(n, n);
      for (const int i : order)
        S = (Matrix::Identity(n, n) -
             U.col(i) * U.col(i).transpose()) * S;
      break;
    }
    default:
      throw std::domain_error(
          "spectral_contraction_check: variant has no single-cycle "
          "linearization");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(S.transpose() * S);
  return std::sqrt(std::max(0.0, es.eigenvalues()(es.eigenvalues().size() - 1)));
}

/// Fraction of random points x = x_star + radius * direction where the
/// residual-form greedy rule and its gradient-form linearization
/// (argmax |g_i . (x - x_star)|, normalized or not) choose the same index.
inline double greedy_rule_agreement(const ProblemInstance& p,
                                    const Vector& x_star, bool normalized,
                                    double radius, int samples,
                                    RngStream& rng) {
  detail::require(samples > 0, "greedy_rule_agreement: need samples");
  const Matrix G = build_G(p, x_star);
  Matrix dirs = G;
  if (normalized)
    for (int i = 0; i < dirs.cols(); ++i) dirs.col(i).normalize();
  const Vector table_norms =
      normalized ? solution_gradient_norms(p)
                 : Vector::Ones(p.num_constraints());

  auto argmax_abs = [](const Vector& s) {
    int best = 0;
    double bv = std::abs(s(0));
    for (Eigen::Index i = 1; i < s.size(); ++i)
      if (std::abs(s(i)) > bv) {
        bv = std::abs(s(i));
        best = static_cast<int>(i);
      }
    return best;
  };

  int agree = 0;
  for (int t = 0; t < samples; ++t) {
    Vector d = gaussian_vector(p.dim(), rng);
    while (d.norm() == 0.0) d = gaussian_vector(p.dim(), rng);
    d *= radius / d.norm();
    const Vector x = x_star + d;
    const Vector res =
        residual_vector(p, x).cwiseQuotient(table_norms);
    const Vector lin = dirs.transpose() * d;
    if (argmax_abs(res) == argmax_abs(lin)) ++agree;
  }
  return static_cast<double>(agree) / samples;
}

// --- invariance directions and deflation ----------------------------------

/// Unit embedded direction of the global phase ambiguity, j * x_star, for a
/// complex problem stored as [Re; Im].
inline Matrix phase_kernel(const Vector& x_star) {
  detail::require(x_star.size() % 2 == 0 && x_star.norm() > 0.0,
                  "phase_kernel: need a nonzero embedded vector");
  const Eigen::Index n = x_star.size() / 2;
  Vector k(x_star.size());
  k.head(n) = -x_star.tail(n);
  k.tail(n) = x_star.head(n);
  return k / k.norm();
}

/// Orthonormal basis of the rigid motions of a stacked configuration:
/// per-axis translations plus infinitesimal rotations. Degenerate
/// configurations (collinear points and the like) reduce the rank; only
/// independent directions are returned.
inline Matrix rigid_motion_kernel(const Vector& x_star, int point_dim) {
  const int d = point_dim;
  detail::require(d > 0 && x_star.size() % d == 0,
                  "rigid_motion_kernel: bad point dimension");
  const int p = static_cast<int>(x_star.size()) / d;
  const int n = static_cast<int>(x_star.size());
  Matrix raw(n, d + d * (d - 1) / 2);
  int col = 0;
  for (int a = 0; a < d; ++a, ++col) {
    raw.col(col).setZero();
    for (int i = 0; i < p; ++i) raw(i * d + a, col) = 1.0;
  }
  for (int a = 0; a < d; ++a)
    for (int b = a + 1; b < d; ++b, ++col) {
      raw.col(col).setZero();
      for (int i = 0; i < p; ++i) {
        raw(i * d + a, col) = -x_star(i * d + b);
        raw(i * d + b, col) = x_star(i * d + a);
      }
    }
  Eigen::JacobiSVD<Matrix> svd(raw, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-10 * sv(0)) ++rank;
  return svd.matrixU().leftCols(rank);
}

/// n x (n - q) orthonormal basis of the complement of span(kernel).
inline Matrix kernel_complement(const Matrix& kernel, int n) {
  detail::require(kernel.rows() == n && kernel.cols() < n,
                  "kernel_complement: bad kernel shape");
  Eigen::HouseholderQR<Matrix> qr(kernel);
  const Matrix Q = qr.householderQ() * Matrix::Identity(n, n);
  return Q.rightCols(n - kernel.cols());
}

// --- aggregated report ------------------------------------------------------

struct RateReport {
  Matrix U;  // raw normalized gradients, n x m
  Matrix G;  // raw gradients, n x m
  int deflated = 0;
  double sigma_min_U = 0.0;
  double sigma_min_G = 0.0;
  double kappa_U = 0.0;
  double kappa_G = 0.0;
  HoffmanInterval hoffman_U;
  HoffmanInterval hoffman_G;
  double l2inf_G = 0.0;
  std::map<Variant, RateInterval> rates;
  std::map<Variant, double> empirical;
};

/// Builds the full local report at x_star. A known invariance basis (global
/// phase, rigid motions) may be passed as `kernel`; the analysis is then
/// carried out on the complement, where the gradients are full rank.
inline RateReport build_rate_report(const ProblemInstance& p,
                                    const Vector& x_star,
                                    const Matrix& kernel = Matrix()) {
  RateReport rep;
  rep.U = build_U(p, x_star);
  rep.G = build_G(p, x_star);
  Matrix Ue = rep.U, Ge = rep.G;
  if (kernel.size() > 0) {
    const Matrix Qc = kernel_complement(kernel, p.dim());
    Ue = Qc.transpose() * rep.U;
    Ge = Qc.transpose() * rep.G;
    rep.deflated = static_cast<int>(kernel.cols());
  }
  rep.sigma_min_U = smallest_singular_value(Ue);
  rep.sigma_min_G = smallest_singular_value(Ge);
  rep.kappa_U = condition_number(Ue);
  rep.kappa_G = condition_number(Ge);
  rep.hoffman_U = hoffman_inf(Ue.transpose());
  rep.hoffman_G = hoffman_inf(Ge.transpose());
  rep.l2inf_G = max_column_norm(Ge);
  for (const Variant v :
       {Variant::Mean, Variant::RandomUniform, Variant::NonUniformRandom,
        Variant::NormalizedGreedy, Variant::Greedy})
    rep.rates[v] = *asymptotic_rate(v, Ue, Ge);
  return rep;
}

}  // namespace spsolve
