#pragma once

#include <optional>
#include <string>
#include <utility>

#include "levelscore/weight.hpp"

namespace levelscore {

/// Score estimate with the Monte-Carlo standard error of its
/// weight-expectation term. Candidate-pool estimation error is not
/// propagated.
struct ScoreValue {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_weight_draws = 0;
};

/// A forecast distribution P_X under evaluation. The density is required for
/// the quadratic score; the pool is required for the CDF/LPM-based scores.
struct Candidate {
  std::string label;
  std::optional<GaussianSpec> density;
  std::optional<SamplePool> pool;

  std::size_t dim() const {
    if (density) return density->dim();
    if (pool) return pool->dim();
    throw CapabilityError("Candidate '" + label + "': neither density nor pool present");
  }

  const GaussianSpec& require_density() const {
    if (!density)
      throw CapabilityError("Candidate '" + label + "': density required but absent");
    return *density;
  }

  const SamplePool& require_pool() const {
    if (!pool) throw CapabilityError("Candidate '" + label + "': pool required but absent");
    return *pool;
  }
};

/// Quadratic score DQS': E_lambda[f_X(Z)^2] - 2 f_X(y) h^2(y).
inline ScoreValue dqs(const Candidate& candidate, const Point& y, const WeightMeasure& w,
                      unsigned threads = 1) {
  const GaussianSpec& f = candidate.require_density();
  check_same_dim(y.size(), f.dim(), "dqs");
  check_same_dim(w.dim(), f.dim(), "dqs");
  const std::size_t d = f.dim();
  MeanResult t1 = w.expectation(
      [&](const double* z) {
        double v = f.pdf(Point(z, z + d));
        return v * v;
      },
      threads);
  ScoreValue s;
  s.value = t1.estimate - 2.0 * f.pdf(y) * w.density(y);
  s.std_error = t1.std_error;
  s.n_weight_draws = w.pool().size();
  return s;
}

/// LPMS': E_lambda[LPM_k(Z)^2 - 2 LPM_k(Z) * theta_k(y, Z)], with LPM_k
/// estimated against the candidate pool and theta_k the observation proxy.
inline ScoreValue lpms(const Candidate& candidate, const Point& y, int k,
                       const WeightMeasure& w, unsigned threads = 1) {
  const SamplePool& pool = candidate.require_pool();
  check_same_dim(y.size(), pool.dim(), "lpms");
  check_same_dim(w.dim(), pool.dim(), "lpms");
  const std::size_t d = pool.dim();
  MeanResult r = w.expectation(
      [&](const double* zp) {
        Point z(zp, zp + d);
        double psi = lpm_estimate(pool, z, k);
        return psi * psi - 2.0 * psi * dirac_transform(y, z, k);
      },
      threads);
  ScoreValue s;
  s.value = r.estimate;
  s.std_error = r.std_error;
  s.n_weight_draws = w.pool().size();
  return s;
}

/// MCRPS' is the k = 0 lower-partial-moment score.
inline ScoreValue mcrps(const Candidate& candidate, const Point& y, const WeightMeasure& w,
                        unsigned threads = 1) {
  return lpms(candidate, y, 0, w, threads);
}

/// Univariate threshold-weighted CRPS in the non-renormalized squared form
/// E_lambda[(F_X(Z) - 1{Z >= y})^2]. Used for cross-checks against mcrps
/// score differences; the omitted cross term depends on y only.
inline ScoreValue crps_univariate(const Candidate& candidate, double y,
                                  const WeightMeasure& w, unsigned threads = 1) {
  const SamplePool& pool = candidate.require_pool();
  if (pool.dim() != 1 || w.dim() != 1)
    throw DimensionError("crps_univariate: requires d == 1");
  MeanResult r = w.expectation(
      [&](const double* zp) {
        Point z(zp, zp + 1);
        double diff = cdf_estimate(pool, z) - (zp[0] >= y ? 1.0 : 0.0);
        return diff * diff;
      },
      threads);
  ScoreValue s;
  s.value = r.estimate;
  s.std_error = r.std_error;
  s.n_weight_draws = w.pool().size();
  return s;
}

/// Generalized quantile score (alpha - 1{y < q}) (H(y) - H(q)) for a
/// nondecreasing H.
template <class H>
double quantile_score(double alpha, double q, double y, H&& h) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw DomainError("quantile_score: alpha must be in (0,1)");
  double ind = y < q ? 1.0 : 0.0;
  return (alpha - ind) * (h(y) - h(q));
}

}  // namespace levelscore
