// sp-solve: command-line front end for the successive projection library.
//
//   sp-solve run     generate a problem, sweep solver variants over trials,
//                    and write per-variant CSV curves, nmse.svg, rates.json
//   sp-solve analyze generate a problem and write rates.json only
//
// Exit codes: 0 success, 2 invalid configuration, 3 all trials diverged.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spsolve/spsolve.hpp"

namespace {

std::vector<spsolve::Variant> parse_variant_list(const std::string& csv) {
  std::vector<spsolve::Variant> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const std::size_t next = csv.find(',', pos);
    const std::string tok =
        csv.substr(pos, next == std::string::npos ? std::string::npos
                                                  : next - pos);
    if (!tok.empty()) {
      const auto v = spsolve::parse_variant(tok);
      if (!v)
        throw std::invalid_argument("unknown variant '" + tok +
                                    "' (expected cp,rp,rpp,nrp,gp,ngp,mp)");
      out.push_back(*v);
    }
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

void add_problem_options(CLI::App* cmd, spsolve::ExperimentConfig& cfg) {
  cmd->add_option("--problem", cfg.problem,
                  "problem family: circles | phase | linear | grp")
      ->required();
  cmd->add_option("--n", cfg.n, "ambient dimension (complex for phase)");
  cmd->add_option("--m", cfg.m, "number of constraints");
  cmd->add_option("--nv", cfg.nv, "grp: number of points");
  cmd->add_option("--d", cfg.d, "grp: per-point dimension");
  cmd->add_option("--edges", cfg.edges, "grp: number of distance constraints");
  cmd->add_option("--seed", cfg.seed, "base seed for all randomness");
  cmd->add_option("--out", cfg.out_dir, "output directory")->required();
}

void print_summary(const spsolve::ExperimentResult& result) {
  std::printf("problem: dim=%d constraints=%d%s\n", result.dim,
              result.num_constraints,
              result.field == spsolve::Field::Complex ? " (complex embedding)"
                                                      : "");
  bool greedy = false;
  for (const auto& o : result.outcomes) {
    const char* name = spsolve::variant_name(o.variant);
    std::printf("%-4s converged=%d exhausted=%d diverged=%d", name,
                o.converged, o.exhausted, o.diverged);
    if (o.converged > 0) std::printf(" mean_cycles=%.1f", o.mean_cycles);
    if (o.fitted_rate) std::printf(" fitted_rate=%.6f", *o.fitted_rate);
    std::printf("\n");
    greedy = greedy || o.variant == spsolve::Variant::Greedy ||
             o.variant == spsolve::Variant::NormalizedGreedy;
  }
  if (greedy)
    std::printf(
        "note: greedy rules scan all m residuals before every projection, "
        "so a full sweep costs O(m^2 n)\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"successive projection solver and rate analysis"};
  app.require_subcommand(1);

  spsolve::ExperimentConfig cfg;
  std::string variants_csv = "cp,rp,rpp,nrp,gp,ngp,mp";

  CLI::App* run = app.add_subcommand("run", "solve and write NMSE curves");
  add_problem_options(run, cfg);
  run->add_option("--variants", variants_csv,
                  "comma-separated subset of cp,rp,rpp,nrp,gp,ngp,mp");
  run->add_option("--trials", cfg.trials, "trials per variant");
  run->add_option("--tol", cfg.tol, "residual infinity-norm tolerance");
  run->add_option("--max-cycles", cfg.max_cycles, "cycle budget per trial");
  run->add_option("--init-radius", cfg.init_radius,
                  "start distance as a fraction of ||x*||");

  CLI::App* analyze =
      app.add_subcommand("analyze", "write the rate report only");
  add_problem_options(analyze, cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(run)) {
      cfg.variants = parse_variant_list(variants_csv);
      const spsolve::ExperimentResult result = spsolve::run_experiment(cfg);
      print_summary(result);
      if (result.total_included == 0) {
        std::fprintf(stderr, "error: every trial diverged\n");
        return 3;
      }
      return 0;
    }

    // analyze: rate report only, no solving.
    spsolve::validate_problem_config(cfg);
    const spsolve::ProblemInstance problem = spsolve::generate_problem(cfg);
    const spsolve::RateReport report = spsolve::build_rate_report(
        problem, *problem.known_solution(),
        spsolve::known_invariance_basis(cfg, problem));
    const std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);
    spsolve::detail::write_text_file(
        dir / "rates.json", spsolve::rate_report_json(report).dump(2) + "\n");
    std::printf("wrote %s\n", (dir / "rates.json").string().c_str());
    return 0;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
