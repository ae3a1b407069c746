#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "levelscore/scores.hpp"

namespace levelscore {

/// Identifies one level set L(Psi; alpha) = {z : Psi(z) >= alpha}.
/// Level sets are closed; the boundary has lambda-measure zero for every
/// continuous case handled here.
struct LevelSpec {
  FunctionalKind functional;
  double alpha = 0.0;

  LevelSpec(FunctionalKind f, double a) : functional(f), alpha(a) {
    if (!(a >= 0.0)) throw DomainError("LevelSpec: alpha must be >= 0");
    if (f.tag == FunctionalKind::Tag::Cdf && a > 1.0)
      throw DomainError("LevelSpec: alpha must be in [0,1] for the CDF functional");
  }
};

/// Psi_X(z): density, empirical CDF, or empirical LPM of order k.
inline double psi_eval(const FunctionalKind& functional, const Candidate& candidate,
                       const Point& z) {
  switch (functional.tag) {
    case FunctionalKind::Tag::Density:
      return candidate.require_density().pdf(z);
    case FunctionalKind::Tag::Cdf:
      return cdf_estimate(candidate.require_pool(), z);
    case FunctionalKind::Tag::Lpm:
      return lpm_estimate(candidate.require_pool(), z, functional.lpm_order);
  }
  throw DomainError("psi_eval: unknown functional");
}

inline bool level_membership(const LevelSpec& spec, const Candidate& candidate,
                             const Point& z) {
  return psi_eval(spec.functional, candidate, z) >= spec.alpha;
}

/// Excess-mass score for density level sets:
/// alpha * lambda{f_X >= alpha} - 1{f_X(y) >= alpha} h^2(y).
/// The second term is a pointwise evaluation, not an expectation: the
/// observation measure is atomic at y with mass h^2(y).
inline ScoreValue density_level_score(const Candidate& candidate, double alpha,
                                      const Point& y, const WeightMeasure& w,
                                      unsigned threads = 1) {
  if (!(alpha > 0.0)) throw DomainError("density_level_score: alpha must be > 0");
  const GaussianSpec& f = candidate.require_density();
  check_same_dim(y.size(), f.dim(), "density_level_score");
  const std::size_t d = f.dim();
  MeanResult t1 = w.expectation(
      [&](const double* z) { return f.pdf(Point(z, z + d)) >= alpha ? 1.0 : 0.0; },
      threads);
  ScoreValue s;
  s.value = alpha * t1.estimate - (f.pdf(y) >= alpha ? 1.0 : 0.0) * w.density(y);
  s.std_error = alpha * t1.std_error;
  s.n_weight_draws = w.pool().size();
  return s;
}

/// LPM level-set score:
/// alpha * E[1{LPM_k(Z) >= alpha}] - E[1{LPM_k(Z) >= alpha} theta_k(y, Z)].
inline ScoreValue lpm_level_score(const Candidate& candidate, double alpha, const Point& y,
                                  int k, const WeightMeasure& w, unsigned threads = 1) {
  if (!(alpha >= 0.0)) throw DomainError("lpm_level_score: alpha must be >= 0");
  const SamplePool& pool = candidate.require_pool();
  check_same_dim(y.size(), pool.dim(), "lpm_level_score");
  check_same_dim(w.dim(), pool.dim(), "lpm_level_score");
  const std::size_t d = pool.dim();
  MeanResult r = w.expectation(
      [&](const double* zp) {
        Point z(zp, zp + d);
        if (lpm_estimate(pool, z, k) < alpha) return 0.0;
        return alpha - dirac_transform(y, z, k);
      },
      threads);
  ScoreValue s;
  s.value = r.estimate;
  s.std_error = r.std_error;
  s.n_weight_draws = w.pool().size();
  return s;
}

/// CDF level-set score is the k = 0 LPM level-set score.
inline ScoreValue cdf_level_score(const Candidate& candidate, double alpha, const Point& y,
                                  const WeightMeasure& w, unsigned threads = 1) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw DomainError("cdf_level_score: alpha must be in (0,1)");
  return lpm_level_score(candidate, alpha, y, 0, w, threads);
}

/// Type-7 empirical quantile (linear interpolation between order statistics)
/// of already-sorted values.
inline double quantile_type7(const std::vector<double>& sorted, double level) {
  if (sorted.empty()) throw DomainError("quantile_type7: empty sample");
  if (!(level >= 0.0 && level <= 1.0))
    throw DomainError("quantile_type7: level must be in [0,1]");
  double h = level * static_cast<double>(sorted.size() - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

/// alpha values for a level-set study: empirical quantiles of
/// Psi_reference(y_i) over the observations, at the requested levels.
inline std::vector<double> alpha_select(const FunctionalKind& functional,
                                        const Candidate& reference,
                                        const SamplePool& observations,
                                        const std::vector<double>& levels) {
  if (observations.size() == 0) throw DomainError("alpha_select: empty observation pool");
  check_same_dim(observations.dim(), reference.dim(), "alpha_select");
  std::vector<double> psi(observations.size());
  for (std::size_t i = 0; i < observations.size(); ++i)
    psi[i] = psi_eval(functional, reference, observations.draw(i));
  std::sort(psi.begin(), psi.end());
  std::vector<double> alphas;
  alphas.reserve(levels.size());
  for (double lv : levels) alphas.push_back(quantile_type7(psi, lv));
  return alphas;
}

/// Per-axis range and node count for contour-grid extraction.
struct GridAxis {
  double min = 0.0;
  double max = 0.0;
  std::size_t nodes = 0;
};

/// Psi evaluated on a full Cartesian grid (row-major: x outer, y inner).
/// Grid data for external contour plotting; bivariate only.
struct ContourGrid {
  std::vector<std::vector<double>> axes;
  std::vector<double> values;
  FunctionalKind functional;
};

inline ContourGrid contour_grid(const FunctionalKind& functional, const Candidate& candidate,
                                const std::vector<GridAxis>& axes) {
  if (axes.size() != 2 || candidate.dim() != 2)
    throw DimensionError("contour_grid: requires d == 2");
  ContourGrid grid;
  grid.functional = functional;
  for (const GridAxis& ax : axes) {
    if (ax.nodes < 2) throw DomainError("contour_grid: node count must be >= 2");
    if (!(ax.max > ax.min)) throw DomainError("contour_grid: axis max must exceed min");
    std::vector<double> coords(ax.nodes);
    for (std::size_t i = 0; i < ax.nodes; ++i)
      coords[i] = ax.min + (ax.max - ax.min) * static_cast<double>(i) /
                               static_cast<double>(ax.nodes - 1);
    grid.axes.push_back(std::move(coords));
  }
  grid.values.reserve(grid.axes[0].size() * grid.axes[1].size());
  Point z(2);
  for (double x : grid.axes[0]) {
    for (double y : grid.axes[1]) {
      z[0] = x;
      z[1] = y;
      grid.values.push_back(psi_eval(functional, candidate, z));
    }
  }
  return grid;
}

}  // namespace levelscore
