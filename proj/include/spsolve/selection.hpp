#pragma once

// Index selection rules. A rule maps (residual vector, step counter, rng) to
// the next constraint index; the full-step mean rule has no index and is
// handled by the solver directly.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spsolve/core.hpp"
#include "spsolve/rng.hpp"

namespace spsolve {

enum class Variant {
  Cyclic,            // cp: i_k = k mod m
  RandomUniform,     // rp: uniform over {0, ..., m-1}
  RandomlyPermuted,  // rpp: fresh uniform permutation each cycle
  NonUniformRandom,  // nrp: fixed weights from squared gradient norms
  Greedy,            // gp: argmax |f_i(x)|
  NormalizedGreedy,  // ngp: argmax |f_i(x)| / ||grad f_i(x*)||
  Mean,              // mp: average of all m projections (full step)
};

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Cyclic: return "cp";
    case Variant::RandomUniform: return "rp";
    case Variant::RandomlyPermuted: return "rpp";
    case Variant::NonUniformRandom: return "nrp";
    case Variant::Greedy: return "gp";
    case Variant::NormalizedGreedy: return "ngp";
    case Variant::Mean: return "mp";
  }
  return "?";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
  if (s == "cp") return Variant::Cyclic;
  if (s == "rp") return Variant::RandomUniform;
  if (s == "rpp") return Variant::RandomlyPermuted;
  if (s == "nrp") return Variant::NonUniformRandom;
  if (s == "gp") return Variant::Greedy;
  if (s == "ngp") return Variant::NormalizedGreedy;
  if (s == "mp") return Variant::Mean;
  return std::nullopt;
}

constexpr Variant kAllVariants[] = {
    Variant::Cyclic,         Variant::RandomUniform, Variant::RandomlyPermuted,
    Variant::NonUniformRandom, Variant::Greedy,      Variant::NormalizedGreedy,
    Variant::Mean};

/// Sampling weights ||grad f_i(x*)||^2 / sum_l ||grad f_l(x*)||^2 from the
/// closed-form norm table. Errors if any constraint lacks a table entry.
inline Vector nonuniform_weights(const ProblemInstance& p) {
  Vector w(p.num_constraints());
  for (int i = 0; i < p.num_constraints(); ++i) {
    const double g = gradient_norm_at_solution(p.constraint(i));
    w(i) = g * g;
  }
  const double total = w.sum();
  detail::require(total > 0.0, "nonuniform weights need a nonzero gradient");
  return w / total;
}

/// Gradient norms at the solution for the normalized greedy rule.
inline Vector solution_gradient_norms(const ProblemInstance& p) {
  Vector g(p.num_constraints());
  for (int i = 0; i < p.num_constraints(); ++i)
    g(i) = gradient_norm_at_solution(p.constraint(i));
  return g;
}

class SelectionRule {
 public:
  static SelectionRule cyclic(int m) { return SelectionRule(Variant::Cyclic, m); }

  static SelectionRule random_uniform(int m) {
    return SelectionRule(Variant::RandomUniform, m);
  }

  static SelectionRule randomly_permuted(int m) {
    return SelectionRule(Variant::RandomlyPermuted, m);
  }

  static SelectionRule greedy(int m) { return SelectionRule(Variant::Greedy, m); }

  static SelectionRule mean(int m) { return SelectionRule(Variant::Mean, m); }

  static SelectionRule nonuniform(const Vector& weights) {
    detail::require(weights.size() > 0, "weights must be nonempty");
    detail::require(weights.minCoeff() >= 0.0, "weights must be nonnegative");
    detail::require(std::abs(weights.sum() - 1.0) <= 1e-12,
                    "weights must sum to one");
    SelectionRule r(Variant::NonUniformRandom, static_cast<int>(weights.size()));
    r.cumulative_.resize(weights.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
      acc += weights(i);
      r.cumulative_[static_cast<std::size_t>(i)] = acc;
    }
    r.cumulative_.back() = 1.0;
    return r;
  }

  static SelectionRule normalized_greedy(const Vector& norms) {
    detail::require(norms.size() > 0 && norms.minCoeff() > 0.0,
                    "normalized greedy needs strictly positive norms");
    SelectionRule r(Variant::NormalizedGreedy, static_cast<int>(norms.size()));
    r.norms_ = norms;
    return r;
  }

  /// Builds the rule for a problem, deriving weights or norms from the
  /// closed-form table where the variant needs them.
  static SelectionRule for_problem(Variant v, const ProblemInstance& p) {
    const int m = p.num_constraints();
    switch (v) {
      case Variant::NonUniformRandom: return nonuniform(nonuniform_weights(p));
      case Variant::NormalizedGreedy:
        return normalized_greedy(solution_gradient_norms(p));
      default: return SelectionRule(v, m);
    }
  }

  Variant variant() const { return variant_; }
  int num_constraints() const { return m_; }

  bool needs_residuals() const {
    return variant_ == Variant::Greedy || variant_ == Variant::NormalizedGreedy;
  }

  /// Index of the constraint to project onto at step k. Ties in the greedy
  /// scores break toward the smallest index; the mean rule has no single
  /// index and errors here.
  int next_index(const Vector& residuals, long k, RngStream& rng) {
    switch (variant_) {
      case Variant::Cyclic:
        return static_cast<int>(k % m_);
      case Variant::RandomUniform:
        return rng.uniform_index(m_);
      case Variant::RandomlyPermuted: {
        if (perm_pos_ >= perm_.size()) {
          perm_ = rng.permutation(m_);
          perm_pos_ = 0;
        }
        return perm_[perm_pos_++];
      }
      case Variant::NonUniformRandom: {
        const double u = rng.uniform01();
        const auto it =
            std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        return static_cast<int>(std::min<std::ptrdiff_t>(
            it - cumulative_.begin(), m_ - 1));
      }
      case Variant::Greedy: {
        detail::require(residuals.size() == m_,
                        "greedy selection needs the residual vector");
        return argmax_abs(residuals);
      }
      case Variant::NormalizedGreedy: {
        detail::require(residuals.size() == m_,
                        "greedy selection needs the residual vector");
        return argmax_abs(residuals.cwiseQuotient(norms_));
      }
      case Variant::Mean:
        throw std::logic_error(
            "the mean rule takes a full step over all constraints and has no "
            "single index");
    }
    throw std::logic_error("unknown selection variant");
  }

 private:
  SelectionRule(Variant v, int m) : variant_(v), m_(m) {
    detail::require(m > 0, "selection rule needs at least one constraint");
  }

  static int argmax_abs(const Vector& scores) {
    int best = 0;
    double best_val = std::abs(scores(0));
    for (Eigen::Index i = 1; i < scores.size(); ++i) {
      const double v = std::abs(scores(i));
      if (v > best_val) {
        best_val = v;
        best = static_cast<int>(i);
      }
    }
    return best;
  }

  Variant variant_;
  int m_;
  std::vector<double> cumulative_;
  std::size_t perm_pos_ = 0;
  std::vector<int> perm_;
  Vector norms_;
};

}  // namespace spsolve
