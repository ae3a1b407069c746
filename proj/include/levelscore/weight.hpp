#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "levelscore/gaussian.hpp"

namespace levelscore {

struct MeanResult {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Fixed chunk size for the deterministic parallel reduction: per-chunk
/// partial sums are combined in chunk order, so the result is bit-identical
/// for any worker count.
inline constexpr std::size_t kExpectationChunk = 4096;

/// The weight measure lambda with density h^2 = PDF of a known Gaussian.
/// Turns every score integral into a sample expectation over a pool drawn
/// once and reused across all score evaluations.
class WeightMeasure {
 public:
  WeightMeasure(GaussianSpec spec, std::size_t pool_size, std::uint64_t pool_seed)
      : spec_(std::move(spec)), pool_(spec_.sample(pool_size, pool_seed)) {}

  /// Weight measure whose expectations run over an externally supplied pool
  /// (e.g. ingested draws); the density still comes from the Gaussian spec.
  WeightMeasure(GaussianSpec spec, SamplePool pool)
      : spec_(std::move(spec)), pool_(std::move(pool)) {
    check_same_dim(pool_.dim(), spec_.dim(), "WeightMeasure");
  }

  std::size_t dim() const { return spec_.dim(); }
  const GaussianSpec& spec() const { return spec_; }
  const SamplePool& pool() const { return pool_; }

  double density(const Point& z) const {
    check_same_dim(z.size(), dim(), "WeightMeasure::density");
    return spec_.pdf(z);
  }

  /// Sample expectation of g over the weight pool, with the Monte-Carlo
  /// standard error sd(g)/sqrt(M). g receives a pointer to one pool row.
  template <class G>
  MeanResult expectation(G&& g, unsigned threads = 1) const {
    const std::size_t m = pool_.size();
    const std::size_t n_chunks = (m + kExpectationChunk - 1) / kExpectationChunk;
    std::vector<double> sums(n_chunks, 0.0), sumsqs(n_chunks, 0.0);
    std::vector<std::int64_t> bad(n_chunks, -1);

    auto run_chunk = [&](std::size_t c) {
      const std::size_t lo = c * kExpectationChunk;
      const std::size_t hi = std::min(lo + kExpectationChunk, m);
      double s = 0.0, s2 = 0.0;
      for (std::size_t i = lo; i < hi; ++i) {
        double v = g(pool_.row(i));
        if (std::isnan(v)) {
          bad[c] = static_cast<std::int64_t>(i);
          return;
        }
        s += v;
        s2 += v * v;
      }
      sums[c] = s;
      sumsqs[c] = s2;
    };

    if (threads <= 1 || n_chunks <= 1) {
      for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
    } else {
      std::atomic<std::size_t> next{0};
      auto worker = [&] {
        for (;;) {
          std::size_t c = next.fetch_add(1);
          if (c >= n_chunks) return;
          run_chunk(c);
        }
      };
      std::vector<std::thread> ts;
      unsigned n = std::min<std::size_t>(threads, n_chunks);
      ts.reserve(n);
      for (unsigned t = 0; t < n; ++t) ts.emplace_back(worker);
      for (auto& t : ts) t.join();
    }

    double sum = 0.0, sumsq = 0.0;
    for (std::size_t c = 0; c < n_chunks; ++c) {
      if (bad[c] >= 0)
        throw EvaluationError("WeightMeasure::expectation: g returned NaN at draw " +
                              std::to_string(bad[c]));
      sum += sums[c];
      sumsq += sumsqs[c];
    }
    const double dm = static_cast<double>(m);
    MeanResult r;
    r.estimate = sum / dm;
    double var = (sumsq - sum * sum / dm) / (m > 1 ? dm - 1.0 : 1.0);
    r.std_error = var > 0.0 ? std::sqrt(var / dm) : 0.0;
    return r;
  }

 private:
  GaussianSpec spec_;
  SamplePool pool_;
};

}  // namespace levelscore
