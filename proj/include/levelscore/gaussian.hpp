#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "levelscore/common.hpp"
#include "levelscore/pool.hpp"
#include "levelscore/rng.hpp"

namespace levelscore {

/// Analytic multivariate Gaussian N(mu, Sigma). The covariance must be
/// symmetric (1e-12 relative tolerance) and positive definite; a failed
/// Cholesky factorization is rejected at construction rather than patched,
/// since silent regularization would corrupt score comparisons.
class GaussianSpec {
 public:
  GaussianSpec(Point mean, std::vector<double> cov_row_major)
      : mean_(std::move(mean)), cov_(std::move(cov_row_major)) {
    check_finite_point(mean_, "GaussianSpec mean");
    const std::size_t d = mean_.size();
    if (cov_.size() != d * d)
      throw SpecError("GaussianSpec: covariance must be d x d");
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        double a = cov_[i * d + j], b = cov_[j * d + i];
        double scale = std::max({std::abs(a), std::abs(b), 1e-300});
        if (std::abs(a - b) > 1e-12 * scale)
          throw SpecError("GaussianSpec: covariance not symmetric");
      }
      if (!std::isfinite(cov_[i * d + i]))
        throw SpecError("GaussianSpec: non-finite covariance entry");
    }
    chol_ = cholesky_lower(cov_, d);
    double log_det_l = 0.0;
    for (std::size_t i = 0; i < d; ++i) log_det_l += std::log(chol_[i * d + i]);
    // (2 pi)^{-d/2} det(Sigma)^{-1/2}, with det(Sigma)^{1/2} = prod L_ii.
    norm_const_ = std::exp(-0.5 * static_cast<double>(d) * std::log(2.0 * M_PI) - log_det_l);
  }

  std::size_t dim() const { return mean_.size(); }
  const Point& mean() const { return mean_; }
  const std::vector<double>& covariance() const { return cov_; }
  const std::vector<double>& cholesky_factor() const { return chol_; }

  /// Squared Mahalanobis distance (z - mu)^T Sigma^{-1} (z - mu).
  double mahalanobis_sq(const Point& z) const {
    check_same_dim(z.size(), dim(), "GaussianSpec::mahalanobis_sq");
    const std::size_t d = dim();
    // Forward-substitute L v = z - mu; then |v|^2.
    std::vector<double> v(d);
    double q = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double s = z[i] - mean_[i];
      for (std::size_t j = 0; j < i; ++j) s -= chol_[i * d + j] * v[j];
      v[i] = s / chol_[i * d + i];
      q += v[i] * v[i];
    }
    return q;
  }

  double pdf(const Point& z) const {
    return norm_const_ * std::exp(-0.5 * mahalanobis_sq(z));
  }

  /// n i.i.d. draws as mu + L xi, bit-reproducible for fixed (spec, n, seed).
  SamplePool sample(std::size_t n, std::uint64_t seed) const {
    if (n == 0) throw DomainError("GaussianSpec::sample: n must be >= 1");
    const std::size_t d = dim();
    NormalStream stream(seed);
    std::vector<double> data(n * d);
    std::vector<double> xi(d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) xi[j] = stream.next();
      for (std::size_t r = 0; r < d; ++r) {
        double s = mean_[r];
        for (std::size_t c = 0; c <= r; ++c) s += chol_[r * d + c] * xi[c];
        data[i * d + r] = s;
      }
    }
    return SamplePool(d, std::move(data), seed);
  }

  /// alpha quantile of a univariate Gaussian: mu + sigma * Phi^{-1}(alpha).
  double quantile(double alpha) const {
    if (dim() != 1) throw DimensionError("GaussianSpec::quantile: requires d == 1");
    if (!(alpha > 0.0 && alpha < 1.0))
      throw DomainError("GaussianSpec::quantile: alpha must be in (0,1)");
    return mean_[0] + chol_[0] * standard_normal_inv_cdf(alpha);
  }

 private:
  static std::vector<double> cholesky_lower(const std::vector<double>& a, std::size_t d) {
    std::vector<double> l(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double s = a[i * d + j];
        for (std::size_t k = 0; k < j; ++k) s -= l[i * d + k] * l[j * d + k];
        if (i == j) {
          if (!(s > 0.0))
            throw SpecError("GaussianSpec: covariance not positive definite");
          l[i * d + i] = std::sqrt(s);
        } else {
          l[i * d + j] = s / l[j * d + j];
        }
      }
    }
    return l;
  }

  Point mean_;
  std::vector<double> cov_;
  std::vector<double> chol_;
  double norm_const_;
};

}  // namespace levelscore
