#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "levelscore/common.hpp"

namespace levelscore {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for sub-stream `stream` of an experiment. Stream indices are fixed:
/// 0 = truth observations, 1 = weight pool, 2+i = candidate pool i,
/// 2+n_candidates = alpha-selection reference pool.
inline std::uint64_t derive_stream_seed(std::uint64_t master_seed, std::uint64_t stream) {
  return splitmix64(master_seed ^ stream);
}

/// Inverse standard normal CDF. Acklam's rational approximation refined with
/// one Halley step on the erfc-based CDF; absolute error well below 1e-9.
inline double standard_normal_inv_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("standard_normal_inv_cdf: p must be in (0,1)");

  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double plow = 0.02425;

  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // Halley refinement: F(x) - p with F via erfc.
  double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

/// Deterministic stream of standard normal deviates. mt19937_64 output is
/// fully specified by the standard, and the inverse-CDF transform avoids the
/// implementation-defined std::normal_distribution, so streams are
/// bit-reproducible for a fixed seed.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double next() {
    // 53-bit uniform in the open interval (0,1).
    double u = (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    return standard_normal_inv_cdf(u);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace levelscore
