#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "spsolve/analysis.hpp"
#include "spsolve/harness.hpp"

using namespace spsolve;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (const double x : xs) v(i++) = x;
  return v;
}

}  // namespace

TEST_CASE("gradient matrices have the right columns") {
  const auto p = gen_circle_problem(3, 7, 11);
  const Vector& xs = *p.known_solution();
  const Matrix G = build_G(p, xs);
  const Matrix U = build_U(p, xs);
  REQUIRE(G.rows() == 3);
  REQUIRE(G.cols() == 7);
  const Vector table = solution_gradient_norms(p);
  for (int i = 0; i < 7; ++i) {
    CHECK(G.col(i).isApprox(gradient(p.constraint(i), xs)));
    CHECK(G.col(i).norm() == Approx(table(i)).epsilon(1e-12));
    CHECK(U.col(i).norm() == Approx(1.0).epsilon(1e-14));
  }
  CHECK((G.col(0).norm() * U.col(0)).isApprox(G.col(0)));
}

TEST_CASE("build_G rejects infeasible points and zero gradients") {
  const auto p = gen_circle_problem(3, 7, 11);
  CHECK_THROWS_AS(build_G(p, *p.known_solution() + vec({1, 0, 0})),
                  std::invalid_argument);

  // A subspace member has zero gradient at any of its own points.
  Matrix basis(2, 1);
  basis << 1, 0;
  std::vector<ConstraintSpec> cs;
  cs.push_back(ConstraintSpec::subspace(basis));
  const ProblemInstance q(2, Field::Real, std::move(cs), vec({2, 0}));
  CHECK_THROWS_AS(build_G(q, vec({2, 0})), std::domain_error);
  CHECK_THROWS_WITH(build_G(q, vec({2, 0})),
                    ContainsSubstring("constraint 0"));
}

TEST_CASE("smallest singular value and condition number") {
  Matrix D = Matrix::Zero(2, 2);
  D(0, 0) = 3;
  D(1, 1) = 2;
  CHECK(smallest_singular_value(D) == Approx(2.0).epsilon(1e-14));

  Matrix T = Matrix::Zero(3, 2);
  T(0, 0) = 1;
  T(1, 1) = 1;
  CHECK(smallest_singular_value(T) == Approx(1.0).epsilon(1e-14));

  RngStream rng(21);
  Matrix R(6, 4);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 4; ++j) R(i, j) = rng.normal();
  Eigen::JacobiSVD<Matrix> svd(R);
  CHECK(smallest_singular_value(R) ==
        Approx(svd.singularValues().minCoeff()).epsilon(1e-12));

  CHECK(condition_number(Matrix::Identity(2, 2)) ==
        Approx(std::sqrt(2.0)).epsilon(1e-14));
  Matrix rank1(2, 2);
  rank1 << 1, 2, 2, 4;
  CHECK_THROWS_AS(condition_number(rank1), std::domain_error);

  Matrix C(2, 2);
  C << 3, 0, 4, 0;
  CHECK(max_column_norm(C) == Approx(5.0));
}

TEST_CASE("hoffman bracket on hand-checkable inputs") {
  const double inv_sqrt3 = 1.0 / std::sqrt(3.0);

  // Identity: the balanced unit vector attains min ||v||_inf = 1/sqrt(3).
  const auto hi = hoffman_inf(Matrix::Identity(3, 3));
  CHECK(hi.lower == Approx(inv_sqrt3).epsilon(1e-14));
  CHECK(hi.upper >= hi.lower);
  CHECK(hi.upper == Approx(inv_sqrt3).epsilon(1e-6));

  // Two axes plus the diagonal: the minimizer v = (1,-1)/sqrt(2) zeroes the
  // third row and max(|v1|,|v2|) >= 1/sqrt(2) always, so h_inf = 1/sqrt(2).
  Matrix Mt(3, 2);
  const double s = 1.0 / std::sqrt(2.0);
  Mt << 1, 0, 0, 1, s, s;
  const auto hb = hoffman_inf(Mt);
  CHECK(hb.lower == Approx(inv_sqrt3).epsilon(1e-14));
  CHECK(hb.upper == Approx(s).epsilon(1e-9));
  CHECK(hb.lower <= hb.upper);

  // Single column: the objective is fixed, so both ends are explicit.
  Matrix col(3, 1);
  col << 1, 2, -3;
  const auto hc = hoffman_inf(col);
  CHECK(hc.upper == Approx(3.0));
  CHECK(hc.lower == Approx(col.norm() / std::sqrt(3.0)).epsilon(1e-14));

  Matrix rank1(3, 2);
  rank1 << 1, 2, 2, 4, 3, 6;
  CHECK_THROWS_AS(hoffman_inf(rank1), std::domain_error);
  CHECK_THROWS_AS(hoffman_inf(Matrix::Identity(2, 3)), std::invalid_argument);
}

TEST_CASE("asymptotic rates follow the closed forms") {
  const auto p = gen_circle_problem(4, 9, 33);
  const Vector& xs = *p.known_solution();
  const Matrix U = build_U(p, xs);
  const Matrix G = build_G(p, xs);

  CHECK_FALSE(asymptotic_rate(Variant::Cyclic, U, G).has_value());
  CHECK_FALSE(asymptotic_rate(Variant::RandomlyPermuted, U, G).has_value());

  const auto mean = *asymptotic_rate(Variant::Mean, U, G);
  const auto rp = *asymptotic_rate(Variant::RandomUniform, U, G);
  CHECK(mean.lower == mean.upper);
  CHECK(mean.lower == Approx(rp.lower).epsilon(1e-15));
  const double sigma = smallest_singular_value(U);
  CHECK(rp.lower ==
        Approx(std::sqrt(1.0 - sigma * sigma / 9.0)).epsilon(1e-12));

  // Unit columns give ||U||_F^2 = m, so the normalized-greedy upper end and
  // the uniform-random factor coincide.
  const auto ngp = *asymptotic_rate(Variant::NormalizedGreedy, U, G);
  CHECK(ngp.lower <= ngp.upper);
  CHECK(ngp.upper == Approx(rp.upper).epsilon(1e-12));

  const auto gp = *asymptotic_rate(Variant::Greedy, U, G);
  CHECK(gp.lower <= gp.upper);
  CHECK(gp.lower >= 0.0);
  CHECK(gp.upper < 1.0);

  const auto nrp = *asymptotic_rate(Variant::NonUniformRandom, U, G);
  CHECK(nrp.lower == nrp.upper);
  CHECK(nrp.lower ==
        Approx(std::sqrt(1.0 - 1.0 / std::pow(condition_number(G), 2)))
            .epsilon(1e-12));
}

TEST_CASE("mean-map linearization matches the eigenvalue identity") {
  for (const std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const auto p = gen_circle_problem(4, 11, seed);
    const Vector& xs = *p.known_solution();
    const Matrix U = build_U(p, xs);
    const double sigma = smallest_singular_value(U);
    const double s = spectral_contraction_check(p, xs, Variant::Mean);
    CHECK(s == Approx(1.0 - sigma * sigma / 11.0).epsilon(1e-12));
  }
}

TEST_CASE("cyclic linearization vanishes for orthonormal normals") {
  std::vector<ConstraintSpec> cs;
  cs.push_back(ConstraintSpec::hyperplane(vec({1, 0, 0}), 0.0));
  cs.push_back(ConstraintSpec::hyperplane(vec({0, 1, 0}), 0.0));
  cs.push_back(ConstraintSpec::hyperplane(vec({0, 0, 1}), 0.0));
  const ProblemInstance p(3, Field::Real, std::move(cs), vec({0, 0, 0}));
  CHECK(spectral_contraction_check(p, vec({0, 0, 0}), Variant::Cyclic) <
        1e-14);
  const double a =
      spectral_contraction_check(p, vec({0, 0, 0}), Variant::RandomlyPermuted, 5);
  const double b =
      spectral_contraction_check(p, vec({0, 0, 0}), Variant::RandomlyPermuted, 5);
  CHECK(a == b);
  CHECK_THROWS_AS(
      spectral_contraction_check(p, vec({0, 0, 0}), Variant::Greedy),
      std::domain_error);
}

TEST_CASE("projector Jacobians agree with the tangent law") {
  // One feasible instance per smooth family; the finite-difference Jacobian
  // must be close to I - u u^T at the solution.
  std::vector<ConstraintSpec> cs;
  cs.push_back(ConstraintSpec::hyperplane(vec({1, 2, 2}), 3.0));
  cs.push_back(ConstraintSpec::sphere(vec({0, 1, -1}), 2.0));
  cs.push_back(ConstraintSpec::ellipsoid_surface(vec({1, -1, 2}), 1.5));
  Vector xs(3);
  {
    // A point satisfying all three is unnecessary; test each at its own
    // feasible point instead.
    xs << 1, 1, 0;  // on the hyperplane: 1 + 2 + 0 = 3
    CHECK(projection_jacobian_check(cs[0], xs) < 1e-9);
    xs << 2, 1, -1;  // distance 2 from the sphere center
    CHECK(projection_jacobian_check(cs[1], xs) < 1e-7);
    xs << 1.5, 0, 0;  // a^T x = 1.5
    CHECK(projection_jacobian_check(cs[2], xs) < 1e-7);
  }

  const auto phase = gen_phase_retrieval(3, 9, 4);
  for (int i = 0; i < phase.num_constraints(); ++i)
    CHECK(projection_jacobian_check(phase.constraint(i),
                                    *phase.known_solution()) < 1e-6);

  std::vector<ConstraintSpec> pw;
  pw.push_back(ConstraintSpec::pairwise_distance(0, 1, 2.0, 2, 2));
  CHECK(projection_jacobian_check(pw[0], vec({0, 0, 2, 0})) < 1e-7);

  // The subspace projector is affine, so central differences recover the
  // cached projector matrix almost exactly.
  Matrix basis(3, 2);
  basis << 1, 0, 0, 1, 0, 0;
  const auto sub = ConstraintSpec::subspace(basis);
  const Vector at = vec({0.3, -0.2, 0});
  const Matrix P = sub.as<Subspace>().projector;
  const double h = 1e-5;
  Matrix J(3, 3);
  Vector probe = at;
  for (int j = 0; j < 3; ++j) {
    probe(j) = at(j) + h;
    const Vector plus = project(sub, probe);
    probe(j) = at(j) - h;
    const Vector minus = project(sub, probe);
    probe(j) = at(j);
    J.col(j) = (plus - minus) / (2.0 * h);
  }
  CHECK((J - P).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("tangent projector oracle") {
  const Matrix P = tangent_projector(vec({3, 4}));
  Matrix expected(2, 2);
  expected << 0.64, -0.48, -0.48, 0.36;
  CHECK((P - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(tangent_projector(vec({0, 0})), std::invalid_argument);
}

TEST_CASE("empirical rate fits geometric decay") {
  std::vector<double> errs;
  for (int k = 0; k < 40; ++k) errs.push_back(2.0 * std::pow(0.9, k));
  CHECK(empirical_rate(errs) == Approx(0.9).epsilon(1e-12));

  // A flat head followed by decay: the trailing window isolates the tail.
  std::vector<double> mixed;
  for (int k = 0; k < 10; ++k) mixed.push_back(1.0);
  for (int k = 0; k < 20; ++k) mixed.push_back(std::pow(0.8, k));
  CHECK(empirical_rate(mixed, 20) == Approx(0.8).epsilon(1e-12));

  // Entries at or below the floor are ignored.
  std::vector<double> floored = {1.0, 0.5, 0.25, 1e-16, 1e-16};
  CHECK(empirical_rate(floored) == Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(empirical_rate(std::vector<double>{1.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(empirical_rate(std::vector<double>{1e-16, 1e-16, 1e-16}),
                  std::invalid_argument);
}

TEST_CASE("phase kernel is the orthogonal invariance direction") {
  const auto p = gen_phase_retrieval(6, 18, 7);
  const Vector& xs = *p.known_solution();
  const Matrix k = phase_kernel(xs);
  REQUIRE(k.cols() == 1);
  CHECK(k.col(0).norm() == Approx(1.0).epsilon(1e-14));
  const Matrix G = build_G(p, xs);
  CHECK((G.transpose() * k).cwiseAbs().maxCoeff() < 1e-10);
  CHECK_THROWS_AS(phase_kernel(vec({1, 0, 0})), std::invalid_argument);

  const Matrix Qc = kernel_complement(k, static_cast<int>(xs.size()));
  CHECK(Qc.cols() == xs.size() - 1);
  CHECK((Qc.transpose() * Qc - Matrix::Identity(Qc.cols(), Qc.cols()))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  CHECK((Qc.transpose() * k).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rigid motions span translations and rotations") {
  const auto p = gen_graph_realization(5, 2, 8, 3);
  const Vector& xs = *p.known_solution();
  const Matrix K = rigid_motion_kernel(xs, 2);
  CHECK(K.cols() == 3);
  CHECK((K.transpose() * K - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() <
        1e-12);
  const Matrix G = build_G(p, xs);
  CHECK((G.transpose() * K).cwiseAbs().maxCoeff() < 1e-10);

  // All points coincident: the rotation direction degenerates.
  CHECK(rigid_motion_kernel(vec({0, 0, 0, 0}), 2).cols() == 2);
}

TEST_CASE("rate report needs deflation for invariant problems") {
  const auto p = gen_phase_retrieval(5, 15, 12);
  const Vector& xs = *p.known_solution();
  CHECK_THROWS_AS(build_rate_report(p, xs), std::domain_error);

  const auto rep = build_rate_report(p, xs, phase_kernel(xs));
  CHECK(rep.deflated == 1);
  CHECK(rep.kappa_U > 1.0);
  CHECK(std::isfinite(rep.kappa_G));
  CHECK(rep.sigma_min_U > 0.0);
  CHECK(rep.hoffman_U.lower <= rep.hoffman_U.upper);
  CHECK(rep.hoffman_G.lower <= rep.hoffman_G.upper);
  CHECK(rep.l2inf_G > 0.0);
  REQUIRE(rep.rates.size() == 5);
  const auto rp = rep.rates.at(Variant::RandomUniform);
  const auto ngp = rep.rates.at(Variant::NormalizedGreedy);
  CHECK(ngp.upper == Approx(rp.upper).epsilon(1e-12));
  for (const auto& [v, r] : rep.rates) {
    CHECK(r.lower >= 0.0);
    CHECK(r.upper < 1.0);
    CHECK(r.lower <= r.upper + 1e-15);
  }
}

TEST_CASE("greedy residual and gradient forms agree near the solution") {
  const auto p = gen_circle_problem(4, 10, 17);
  RngStream rng(5);
  CHECK(greedy_rule_agreement(p, *p.known_solution(), false, 1e-6, 500, rng) >=
        0.99);
  CHECK(greedy_rule_agreement(p, *p.known_solution(), true, 1e-6, 500, rng) >=
        0.99);
}
