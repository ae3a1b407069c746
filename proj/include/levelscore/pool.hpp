#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "levelscore/common.hpp"

namespace levelscore {

/// Order-k observation proxy: prod_j (z_j - y_j)^k / k! * 1{z_j >= y_j}.
/// For k = 0 this is the componentwise dominance indicator (0^0 = 1).
inline double dirac_transform(const Point& y, const Point& z, int k) {
  if (k < 0) throw DomainError("dirac_transform: k must be >= 0");
  check_same_dim(y.size(), z.size(), "dirac_transform");
  double kfact = 1.0;
  for (int p = 2; p <= k; ++p) kfact *= p;
  double prod = 1.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (z[j] < y[j]) return 0.0;
    double t = 1.0;
    double diff = z[j] - y[j];
    for (int p = 0; p < k; ++p) t *= diff;
    if (k >= 2) t /= kfact;
    prod *= t;
  }
  return prod;
}

/// An ordered collection of d-dimensional draws, stored row-major.
/// The universal Monte-Carlo representation of a distribution.
class SamplePool {
 public:
  SamplePool(std::size_t dim, std::vector<double> data, std::optional<std::uint64_t> seed)
      : dim_(dim), data_(std::move(data)), seed_(seed) {
    if (dim_ == 0) throw DomainError("SamplePool: dimension must be >= 1");
    if (data_.empty() || data_.size() % dim_ != 0)
      throw DomainError("SamplePool: draw count must be >= 1 and divisible by dim");
    for (double v : data_)
      if (!std::isfinite(v)) throw DomainError("SamplePool: non-finite draw");
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return data_.size() / dim_; }
  const double* row(std::size_t i) const { return data_.data() + i * dim_; }
  const std::vector<double>& data() const { return data_; }
  std::optional<std::uint64_t> seed() const { return seed_; }

  Point draw(std::size_t i) const {
    return Point(row(i), row(i) + dim_);
  }

 private:
  std::size_t dim_;
  std::vector<double> data_;
  std::optional<std::uint64_t> seed_;  // nullopt = externally ingested
};

/// Empirical probability that a pool draw is componentwise <= z.
inline double cdf_estimate(const SamplePool& pool, const Point& z) {
  check_same_dim(pool.dim(), z.size(), "cdf_estimate");
  const std::size_t d = pool.dim();
  std::size_t count = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const double* x = pool.row(i);
    bool dominated = true;
    for (std::size_t j = 0; j < d; ++j) {
      if (z[j] < x[j]) {
        dominated = false;
        break;
      }
    }
    count += dominated ? 1 : 0;
  }
  return static_cast<double>(count) / static_cast<double>(pool.size());
}

/// Empirical lower partial moment of order k at z. k = 0 reduces exactly to
/// cdf_estimate: the summands are then 1.0 for dominated draws, so the sum is
/// the integer dominance count.
inline double lpm_estimate(const SamplePool& pool, const Point& z, int k) {
  if (k < 0) throw DomainError("lpm_estimate: k must be >= 0");
  check_same_dim(pool.dim(), z.size(), "lpm_estimate");
  const std::size_t d = pool.dim();
  double kfact = 1.0;
  for (int p = 2; p <= k; ++p) kfact *= p;
  double sum = 0.0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const double* xi = pool.row(i);
    double prod = 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      if (z[j] < xi[j]) {
        prod = 0.0;
        break;
      }
      double t = 1.0;
      double diff = z[j] - xi[j];
      for (int p = 0; p < k; ++p) t *= diff;
      if (k >= 2) t /= kfact;
      prod *= t;
    }
    sum += prod;
  }
  return sum / static_cast<double>(pool.size());
}

/// Plain-text pool format: first line `d N seed` (seed is a 64-bit unsigned
/// integer or the tag "external"), then N lines of d space-separated floats.
inline void write_pool(const SamplePool& pool, std::ostream& os) {
  os << pool.dim() << ' ' << pool.size() << ' ';
  if (pool.seed())
    os << *pool.seed();
  else
    os << "external";
  os << '\n';
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const double* x = pool.row(i);
    for (std::size_t j = 0; j < pool.dim(); ++j) {
      if (j) os << ' ';
      os << format_double(x[j]);
    }
    os << '\n';
  }
}

inline void write_pool_file(const SamplePool& pool, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IngestError("write_pool_file: cannot open " + path);
  write_pool(pool, os);
}

inline SamplePool read_pool(std::istream& is, const std::string& name = "<stream>") {
  std::size_t d = 0, n = 0;
  std::string seed_tok;
  if (!(is >> d >> n >> seed_tok))
    throw IngestError("read_pool: malformed header in " + name);
  std::optional<std::uint64_t> seed;
  if (seed_tok != "external") {
    try {
      seed = std::stoull(seed_tok);
    } catch (const std::exception&) {
      throw IngestError("read_pool: bad seed token '" + seed_tok + "' in " + name);
    }
  }
  std::vector<double> data(d * n);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!(is >> data[i]))
      throw IngestError("read_pool: truncated data in " + name);
  }
  return SamplePool(d, std::move(data), seed);
}

inline SamplePool read_pool_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IngestError("read_pool_file: cannot open " + path);
  return read_pool(is, path);
}

}  // namespace levelscore
