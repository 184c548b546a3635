#pragma once

// Experiment harness: seeded problem generators, error metrics, and a runner
// that sweeps solver variants over trials and writes per-variant CSV curves,
// a combined SVG plot, and a rate-report JSON.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spsolve/analysis.hpp"
#include "spsolve/core.hpp"
#include "spsolve/rng.hpp"
#include "spsolve/selection.hpp"
#include "spsolve/solver.hpp"

namespace spsolve {

// --- generators -------------------------------------------------------------

/// m spheres in R^n with Gaussian centers, radii measured from a Gaussian
/// ground truth, which is stored as the known solution.
inline ProblemInstance gen_circle_problem(int n, int m, std::uint64_t seed) {
  detail::require(n >= 1 && m >= n, "circle problem needs m >= n >= 1");
  RngStream rng = RngStream::substream(seed, 0);
  const Vector x_star = gaussian_vector(n, rng);
  std::vector<ConstraintSpec> cs;
  cs.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    Vector c = gaussian_vector(n, rng);
    while ((x_star - c).norm() < 1e-6) c = gaussian_vector(n, rng);
    const double r = (x_star - c).norm();
    cs.push_back(ConstraintSpec::sphere(std::move(c), r));
  }
  return ProblemInstance(n, Field::Real, std::move(cs), x_star);
}

/// m magnitude measurements |a_i^H x| = b_i of a complex Gaussian signal in
/// C^n, stored in the real 2n embedding.
inline ProblemInstance gen_phase_retrieval(int n, int m, std::uint64_t seed) {
  detail::require(n >= 1 && m >= n, "phase retrieval needs m >= n >= 1");
  RngStream rng = RngStream::substream(seed, 0);
  const Vector x_star = gaussian_vector(2 * n, rng);
  std::vector<ConstraintSpec> cs;
  cs.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    Vector a = gaussian_vector(2 * n, rng);
    double b = hermitian_inner(a, x_star, Field::Complex).abs();
    while (b < 1e-8) {
      a = gaussian_vector(2 * n, rng);
      b = hermitian_inner(a, x_star, Field::Complex).abs();
    }
    cs.push_back(
        ConstraintSpec::ellipsoid_surface(std::move(a), b, Field::Complex));
  }
  return ProblemInstance(2 * n, Field::Complex, std::move(cs), x_star);
}

/// Consistent dense linear system A x = b with Gaussian rows.
inline ProblemInstance gen_linear_system(int n, int m, std::uint64_t seed) {
  detail::require(n >= 1 && m >= n, "linear system needs m >= n >= 1");
  RngStream rng = RngStream::substream(seed, 0);
  const Vector x_star = gaussian_vector(n, rng);
  std::vector<ConstraintSpec> cs;
  cs.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    Vector a = gaussian_vector(n, rng);
    while (a.norm() < 1e-8) a = gaussian_vector(n, rng);
    const double b = a.dot(x_star);
    cs.push_back(ConstraintSpec::hyperplane(std::move(a), b));
  }
  return ProblemInstance(n, Field::Real, std::move(cs), x_star);
}

namespace detail {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      parent[static_cast<std::size_t>(a)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
      a = parent[static_cast<std::size_t>(a)];
    }
    return a;
  }
  void unite(int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); }
};

}  // namespace detail

/// Graph realization: nv Gaussian points in R^d and `edge_count` distinct
/// pairwise distance constraints forming a connected measurement graph.
inline ProblemInstance gen_graph_realization(int nv, int d, int edge_count,
                                             std::uint64_t seed) {
  detail::require(nv >= 2 && d >= 1, "graph realization needs nv >= 2, d >= 1");
  const int max_edges = nv * (nv - 1) / 2;
  detail::require(edge_count >= nv - 1 && edge_count <= max_edges,
                  "edge count must lie in [nv - 1, nv (nv - 1) / 2]");
  RngStream rng = RngStream::substream(seed, 0);
  const Vector x_star = gaussian_vector(nv * d, rng);

  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(max_edges));
  for (int i = 0; i < nv; ++i)
    for (int j = i + 1; j < nv; ++j) pairs.emplace_back(i, j);

  for (int attempt = 0; attempt < 200; ++attempt) {
    // Fisher-Yates over the pair list, then keep the prefix.
    for (int i = max_edges - 1; i > 0; --i)
      std::swap(pairs[static_cast<std::size_t>(i)],
                pairs[static_cast<std::size_t>(rng.uniform_index(i + 1))]);
    detail::UnionFind uf(nv);
    for (int e = 0; e < edge_count; ++e)
      uf.unite(pairs[static_cast<std::size_t>(e)].first,
               pairs[static_cast<std::size_t>(e)].second);
    bool connected = true;
    for (int i = 1; i < nv && connected; ++i)
      connected = uf.find(i) == uf.find(0);
    if (!connected) continue;

    std::vector<ConstraintSpec> cs;
    cs.reserve(static_cast<std::size_t>(edge_count));
    bool degenerate = false;
    for (int e = 0; e < edge_count && !degenerate; ++e) {
      const auto [i, j] = pairs[static_cast<std::size_t>(e)];
      const double r =
          (x_star.segment(i * d, d) - x_star.segment(j * d, d)).norm();
      if (r < 1e-8) {
        degenerate = true;
        break;
      }
      cs.push_back(ConstraintSpec::pairwise_distance(i, j, r, d, nv));
    }
    if (degenerate) continue;
    return ProblemInstance(nv * d, Field::Real, std::move(cs), x_star);
  }
  throw std::runtime_error(
      "gen_graph_realization: no connected measurement graph found");
}

// --- error metrics ----------------------------------------------------------

inline double nmse(const Vector& x, const Vector& x_star) {
  const double denom = x_star.squaredNorm();
  detail::require(denom > 0.0, "nmse: reference must be nonzero");
  return (x - x_star).squaredNorm() / denom;
}

/// NMSE minimized over a global phase, for embedded complex vectors:
/// (||x||^2 + ||x*||^2 - 2 |x*^H x|) / ||x*||^2.
inline double nmse_phase_aligned(const Vector& x, const Vector& x_star) {
  const double denom = x_star.squaredNorm();
  detail::require(denom > 0.0, "nmse: reference must be nonzero");
  const double cross = hermitian_inner(x_star, x, Field::Complex).abs();
  const double v = (x.squaredNorm() + denom - 2.0 * cross) / denom;
  return std::max(v, 0.0);
}

// --- experiment configuration and results ------------------------------------

struct ExperimentConfig {
  std::string problem = "circles";  // circles | phase | linear | grp
  int n = 0;
  int m = 0;
  int nv = 0;  // grp only
  int d = 0;
  int edges = 0;
  std::vector<Variant> variants;
  int trials = 1;
  std::uint64_t seed = 0;
  double tol = 1e-10;
  int max_cycles = 200;
  double init_radius = 0.5;
  std::string out_dir;
};

struct VariantOutcome {
  Variant variant = Variant::Cyclic;
  int converged = 0;
  int diverged = 0;
  int exhausted = 0;  // hit the iteration budget
  double mean_cycles = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> fitted_rate;  // per projection
  std::vector<double> nmse_mean, nmse_min, nmse_max, residual_inf_mean;
};

struct ExperimentResult {
  int dim = 0;
  int num_constraints = 0;
  Field field = Field::Real;
  RateReport report;
  std::vector<VariantOutcome> outcomes;
  int total_trials = 0;
  int total_included = 0;  // trials that did not diverge, over all variants
};

/// Checks the problem-generation half of the configuration; shared by the
/// run and analyze entry points.
inline void validate_problem_config(const ExperimentConfig& c) {
  using detail::require;
  const bool grp = c.problem == "grp";
  require(c.problem == "circles" || c.problem == "phase" ||
              c.problem == "linear" || grp,
          "problem must be one of circles | phase | linear | grp");
  if (grp) {
    require(c.nv >= 2 && c.d >= 1, "grp needs --nv >= 2 and --d >= 1");
    require(c.edges >= c.nv - 1 && c.edges <= c.nv * (c.nv - 1) / 2,
            "grp needs nv - 1 <= edges <= nv (nv - 1) / 2");
  } else {
    require(c.n >= 1, "--n must be positive");
    require(c.m >= c.n, "generated instances need m >= n");
  }
  require(!c.out_dir.empty(), "--out directory is required");
}

inline void validate_config(const ExperimentConfig& c) {
  using detail::require;
  validate_problem_config(c);
  require(!c.variants.empty(), "at least one variant is required");
  for (std::size_t i = 0; i < c.variants.size(); ++i)
    for (std::size_t j = i + 1; j < c.variants.size(); ++j)
      require(c.variants[i] != c.variants[j], "duplicate variant");
  require(c.trials >= 1, "--trials must be positive");
  const bool randomized =
      std::any_of(c.variants.begin(), c.variants.end(), [](Variant v) {
        return v == Variant::RandomUniform || v == Variant::NonUniformRandom;
      });
  require(!randomized || c.trials >= 30,
          "rp and nrp curves average over randomness; use at least 30 trials");
  require(c.tol > 0.0, "--tol must be positive");
  require(c.max_cycles >= 1, "--max-cycles must be positive");
  require(c.init_radius > 0.0, "--init-radius must be positive");
}

inline ProblemInstance generate_problem(const ExperimentConfig& c) {
  if (c.problem == "circles") return gen_circle_problem(c.n, c.m, c.seed);
  if (c.problem == "phase") return gen_phase_retrieval(c.n, c.m, c.seed);
  if (c.problem == "linear") return gen_linear_system(c.n, c.m, c.seed);
  return gen_graph_realization(c.nv, c.d, c.edges, c.seed);
}

/// Invariance directions of the generated families that are rank-deficient
/// by construction: global phase for phase retrieval, rigid motions for
/// graph realization. Empty for the others.
inline Matrix known_invariance_basis(const ExperimentConfig& c,
                                     const ProblemInstance& p) {
  if (c.problem == "phase") return phase_kernel(*p.known_solution());
  if (c.problem == "grp")
    return rigid_motion_kernel(*p.known_solution(), c.d);
  return Matrix();
}

// --- deterministic text output ------------------------------------------------

namespace detail {

/// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open " + path.string() + " for writing");
  out << content;
  require(out.good(), "failed writing " + path.string());
}

}  // namespace detail

inline void write_variant_csv(const std::filesystem::path& path,
                              const VariantOutcome& o) {
  std::string s = "cycle,nmse_mean,nmse_min,nmse_max,residual_inf_mean\n";
  for (std::size_t c = 0; c < o.nmse_mean.size(); ++c) {
    s += std::to_string(c);
    s += ',';
    s += detail::format_double(o.nmse_mean[c]);
    s += ',';
    s += detail::format_double(o.nmse_min[c]);
    s += ',';
    s += detail::format_double(o.nmse_max[c]);
    s += ',';
    s += detail::format_double(o.residual_inf_mean[c]);
    s += '\n';
  }
  detail::write_text_file(path, s);
}

namespace detail {

inline std::string svg_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace detail

/// Combined mean-NMSE plot, log10 on the vertical axis.
inline void write_nmse_svg(const std::filesystem::path& path,
                           const std::vector<VariantOutcome>& outcomes) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf"};
  const double width = 820, height = 540;
  const double left = 70, right = 780, top = 30, bottom = 490;

  std::size_t cycles = 0;
  double lo = 0.0, hi = -300.0;
  bool any = false;
  for (const auto& o : outcomes) {
    cycles = std::max(cycles, o.nmse_mean.size());
    for (const double v : o.nmse_mean) {
      const double e = std::log10(std::max(v, 1e-18));
      lo = std::min(lo, e);
      hi = std::max(hi, e);
      any = true;
    }
  }
  if (!any) {
    detail::write_text_file(path, "<svg xmlns='http://www.w3.org/2000/svg'/>\n");
    return;
  }
  lo = std::floor(lo) - 0.5;
  hi = std::ceil(hi) + 0.5;
  const double xspan = cycles > 1 ? static_cast<double>(cycles - 1) : 1.0;
  auto xpos = [&](double c) { return left + (right - left) * c / xspan; };
  auto ypos = [&](double e) {
    return bottom - (bottom - top) * (e - lo) / (hi - lo);
  };

  std::string s;
  s += "<svg xmlns='http://www.w3.org/2000/svg' width='" +
       detail::svg_num(width) + "' height='" + detail::svg_num(height) +
       "' viewBox='0 0 " + detail::svg_num(width) + " " +
       detail::svg_num(height) + "'>\n";
  s += "<rect width='100%' height='100%' fill='white'/>\n";
  s += "<text x='" + detail::svg_num((left + right) / 2) + "' y='" +
       detail::svg_num(height - 10) +
       "' text-anchor='middle' font-size='14'>cycle</text>\n";
  s += "<text x='18' y='" + detail::svg_num((top + bottom) / 2) +
       "' text-anchor='middle' font-size='14' transform='rotate(-90 18 " +
       detail::svg_num((top + bottom) / 2) + ")'>log10 NMSE</text>\n";

  const int ystep = std::max(1, static_cast<int>((hi - lo) / 10.0));
  for (int e = static_cast<int>(std::ceil(lo)); e <= hi; e += ystep) {
    const double y = ypos(e);
    s += "<line x1='" + detail::svg_num(left) + "' y1='" + detail::svg_num(y) +
         "' x2='" + detail::svg_num(right) + "' y2='" + detail::svg_num(y) +
         "' stroke='#dddddd'/>\n";
    s += "<text x='" + detail::svg_num(left - 8) + "' y='" +
         detail::svg_num(y + 4) + "' text-anchor='end' font-size='12'>" +
         std::to_string(e) + "</text>\n";
  }
  const int xticks = 8;
  for (int t = 0; t <= xticks; ++t) {
    const double c = xspan * t / xticks;
    const double x = xpos(c);
    s += "<line x1='" + detail::svg_num(x) + "' y1='" + detail::svg_num(bottom) +
         "' x2='" + detail::svg_num(x) + "' y2='" +
         detail::svg_num(bottom + 5) + "' stroke='black'/>\n";
    s += "<text x='" + detail::svg_num(x) + "' y='" +
         detail::svg_num(bottom + 20) +
         "' text-anchor='middle' font-size='12'>" +
         std::to_string(static_cast<long>(c)) + "</text>\n";
  }
  s += "<rect x='" + detail::svg_num(left) + "' y='" + detail::svg_num(top) +
       "' width='" + detail::svg_num(right - left) + "' height='" +
       detail::svg_num(bottom - top) + "' fill='none' stroke='black'/>\n";

  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    if (o.nmse_mean.empty()) continue;
    const char* color = kColors[i % 7];
    std::string pts;
    for (std::size_t c = 0; c < o.nmse_mean.size(); ++c) {
      pts += detail::svg_num(xpos(static_cast<double>(c)));
      pts += ',';
      pts += detail::svg_num(ypos(std::log10(std::max(o.nmse_mean[c], 1e-18))));
      pts += ' ';
    }
    s += "<polyline fill='none' stroke='";
    s += color;
    s += "' stroke-width='1.5' points='" + pts + "'/>\n";
    const double ly = top + 18 + 18 * static_cast<double>(i);
    s += "<line x1='" + detail::svg_num(right - 110) + "' y1='" +
         detail::svg_num(ly - 4) + "' x2='" + detail::svg_num(right - 80) +
         "' y2='" + detail::svg_num(ly - 4) + "' stroke='";
    s += color;
    s += "' stroke-width='2'/>\n";
    s += "<text x='" + detail::svg_num(right - 72) + "' y='" +
         detail::svg_num(ly) + "' font-size='13'>";
    s += variant_name(o.variant);
    s += "</text>\n";
  }
  s += "</svg>\n";
  detail::write_text_file(path, s);
}

/// rates.json body for a report plus fitted empirical rates.
inline nlohmann::ordered_json rate_report_json(const RateReport& rep) {
  nlohmann::ordered_json j;
  j["kappa_U"] = rep.kappa_U;
  j["kappa_G"] = rep.kappa_G;
  j["sigma_min_U"] = rep.sigma_min_U;
  j["hoffman_U"] = {{"lower", rep.hoffman_U.lower},
                    {"upper", rep.hoffman_U.upper}};
  j["hoffman_G"] = {{"lower", rep.hoffman_G.lower},
                    {"upper", rep.hoffman_G.upper}};
  j["l2inf_G"] = rep.l2inf_G;
  nlohmann::ordered_json rates;
  rates["mp"] = rep.rates.at(Variant::Mean).lower;
  rates["rp"] = rep.rates.at(Variant::RandomUniform).lower;
  rates["nrp"] = rep.rates.at(Variant::NonUniformRandom).lower;
  rates["ngp"] = {{"lower", rep.rates.at(Variant::NormalizedGreedy).lower},
                  {"upper", rep.rates.at(Variant::NormalizedGreedy).upper}};
  rates["gp"] = {{"lower", rep.rates.at(Variant::Greedy).lower},
                 {"upper", rep.rates.at(Variant::Greedy).upper}};
  j["rates"] = rates;
  nlohmann::ordered_json emp = nlohmann::ordered_json::object();
  for (const Variant v : kAllVariants) {
    const auto it = rep.empirical.find(v);
    if (it != rep.empirical.end()) emp[variant_name(v)] = it->second;
  }
  j["empirical"] = emp;
  if (rep.deflated > 0) j["deflated"] = rep.deflated;
  return j;
}

// --- the runner ---------------------------------------------------------------

/// Runs every configured variant for `trials` runs from perturbed starts,
/// aggregates NMSE per cycle (phase-aligned for complex problems), fits
/// empirical contraction factors, and writes <variant>.csv, nmse.svg, and
/// rates.json into the output directory. Divergent trials are excluded from
/// the curves and counted in the outcome.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  validate_config(config);
  const ProblemInstance problem = generate_problem(config);
  const Vector& x_star = *problem.known_solution();
  const int m = problem.num_constraints();
  const bool complex_field = problem.field() == Field::Complex;
  const double delta = config.init_radius * x_star.norm();

  ExperimentResult result;
  result.dim = problem.dim();
  result.num_constraints = m;
  result.field = problem.field();
  result.total_trials = config.trials * static_cast<int>(config.variants.size());
  result.report =
      build_rate_report(problem, x_star, known_invariance_basis(config, problem));

  const std::size_t rows = static_cast<std::size_t>(config.max_cycles) + 1;
  const auto metric = [&](const Vector& x) {
    return complex_field ? nmse_phase_aligned(x, x_star) : nmse(x, x_star);
  };

  for (const Variant v : config.variants) {
    VariantOutcome outcome;
    outcome.variant = v;
    std::vector<double> sum(rows, 0.0), mn(rows, 0.0), mx(rows, 0.0),
        res_sum(rows, 0.0);
    int included = 0;
    double cycles_acc = 0.0;

    for (int t = 1; t <= config.trials; ++t) {
      RngStream trial_rng = RngStream::substream(
          config.seed, 1 + static_cast<std::uint64_t>(v), static_cast<std::uint64_t>(t));
      const Vector x0 = perturbed_start(problem, delta, trial_rng);

      SolverConfig sc;
      sc.rule = v;
      sc.tol = config.tol;
      sc.max_iterations = static_cast<long>(config.max_cycles) * m;
      sc.seed = mix_seed(config.seed, 1 + static_cast<std::uint64_t>(v),
                         static_cast<std::uint64_t>(t));
      sc.record_trace = false;

      std::vector<double> curve, res_curve;
      curve.reserve(rows);
      res_curve.reserve(rows);
      const CycleObserver observer = [&](long, const Vector& x) {
        curve.push_back(metric(x));
        res_curve.push_back(residual_inf_norm(problem, x));
      };
      const SolveResult sr = sp_solve(problem, x0, sc, observer);

      if (sr.status == SolveStatus::Diverged) {
        ++outcome.diverged;
        continue;
      }
      if (sr.status == SolveStatus::Converged) {
        ++outcome.converged;
        cycles_acc += static_cast<double>(sr.projections_used) / m;
      } else {
        ++outcome.exhausted;
      }
      // Flat tail: cycles after termination hold the final point.
      const double tail_nmse = metric(sr.x);
      const double tail_res = residual_inf_norm(problem, sr.x);
      while (curve.size() < rows) {
        curve.push_back(tail_nmse);
        res_curve.push_back(tail_res);
      }

      for (std::size_t c = 0; c < rows; ++c) {
        sum[c] += curve[c];
        res_sum[c] += res_curve[c];
        if (included == 0) {
          mn[c] = curve[c];
          mx[c] = curve[c];
        } else {
          mn[c] = std::min(mn[c], curve[c]);
          mx[c] = std::max(mx[c], curve[c]);
        }
      }
      ++included;
    }

    if (included > 0) {
      outcome.nmse_mean.resize(rows);
      outcome.nmse_min = mn;
      outcome.nmse_max = mx;
      outcome.residual_inf_mean.resize(rows);
      for (std::size_t c = 0; c < rows; ++c) {
        outcome.nmse_mean[c] = sum[c] / included;
        outcome.residual_inf_mean[c] = res_sum[c] / included;
      }
      if (outcome.converged > 0) outcome.mean_cycles = cycles_acc / outcome.converged;

      // Per-projection contraction fitted on the decaying part of the curve.
      std::vector<double> errors;
      for (std::size_t c = 0; c < rows; ++c) {
        const double e = std::sqrt(outcome.nmse_mean[c]);
        if (e > 1e-11 && e < 1e-2) errors.push_back(e);
        if (e <= 1e-11) break;
      }
      if (errors.size() >= 3) {
        const double per_cycle = empirical_rate(errors, 0, 0.0);
        outcome.fitted_rate = v == Variant::Mean
                                  ? per_cycle
                                  : std::pow(per_cycle, 1.0 / m);
        result.report.empirical[v] = *outcome.fitted_rate;
      }
    }
    result.total_included += included;
    result.outcomes.push_back(std::move(outcome));
  }

  // Outputs.
  const std::filesystem::path dir(config.out_dir);
  std::filesystem::create_directories(dir);
  for (const auto& o : result.outcomes)
    write_variant_csv(dir / (std::string(variant_name(o.variant)) + ".csv"), o);
  write_nmse_svg(dir / "nmse.svg", result.outcomes);
  detail::write_text_file(dir / "rates.json",
                          rate_report_json(result.report).dump(2) + "\n");
  return result;
}

}  // namespace spsolve
