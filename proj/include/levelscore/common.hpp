#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace levelscore {

/// A location z in R^d. All coordinates must be finite.
using Point = std::vector<double>;

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SpecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EvaluationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CapabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IngestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void check_finite_point(const Point& z, const char* what) {
  if (z.empty()) throw DomainError(std::string(what) + ": dimension must be >= 1");
  for (double c : z) {
    if (!std::isfinite(c)) throw DomainError(std::string(what) + ": non-finite coordinate");
  }
}

inline void check_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
  }
}

/// Which functional Psi of a distribution a level set is built from.
/// Lpm with order 0 behaves identically to Cdf everywhere.
struct FunctionalKind {
  enum class Tag { Density, Cdf, Lpm };
  Tag tag = Tag::Cdf;
  int lpm_order = 0;  // meaningful only for Tag::Lpm

  static FunctionalKind density() { return {Tag::Density, 0}; }
  static FunctionalKind cdf() { return {Tag::Cdf, 0}; }
  static FunctionalKind lpm(int k) {
    if (k < 0) throw DomainError("FunctionalKind::lpm: order must be >= 0");
    return {Tag::Lpm, k};
  }

  std::string name() const {
    switch (tag) {
      case Tag::Density: return "density";
      case Tag::Cdf: return "cdf";
      case Tag::Lpm: return "lpm";
    }
    return "?";
  }
};

/// Lossless decimal formatting (17 significant digits round-trips a double).
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace levelscore
