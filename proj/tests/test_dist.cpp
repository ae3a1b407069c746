#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "levelscore/gaussian.hpp"

using namespace levelscore;

namespace {
constexpr double kInvSqrt2Pi = 0.39894228040143268;
}

TEST_CASE("gaussian pdf closed forms") {
  GaussianSpec std1({0.0}, {1.0});
  CHECK(std1.pdf({0.0}) == doctest::Approx(kInvSqrt2Pi).epsilon(1e-12));

  GaussianSpec std2({0.0, 0.0}, {1.0, 0.0, 0.0, 1.0});
  CHECK(std2.pdf({0.0, 0.0}) == doctest::Approx(1.0 / (2.0 * M_PI)).epsilon(1e-12));

  // det = 0.75, quadratic form at (1,-1) is 4, so the value is e^-2/(2 pi sqrt(0.75))
  GaussianSpec corr({0.0, 0.0}, {1.0, 0.5, 0.5, 1.0});
  double expected = std::exp(-2.0) / (2.0 * M_PI * std::sqrt(0.75));
  CHECK(corr.pdf({1.0, -1.0}) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.024871).epsilon(1e-4));
}

TEST_CASE("gaussian pdf integrates to one on a grid") {
  GaussianSpec g({0.3}, {1.7});
  double sum = 0.0;
  const int n = 20001;
  const double lo = 0.3 - 12.0, hi = 0.3 + 12.0;
  const double step = (hi - lo) / (n - 1);
  for (int i = 0; i < n; ++i) {
    double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    sum += w * g.pdf({lo + step * i}) * step;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("gaussian spec validation") {
  CHECK_THROWS_AS(GaussianSpec({0.0, 0.0}, {1.0, 0.9, 0.2, 1.0}), SpecError);    // asymmetric
  CHECK_THROWS_AS(GaussianSpec({0.0, 0.0}, {1.0, 2.0, 2.0, 1.0}), SpecError);    // not PD
  CHECK_THROWS_AS(GaussianSpec({0.0}, {1.0, 0.0, 0.0, 1.0}), SpecError);
}

TEST_CASE("sampling is deterministic and reproduces moments") {
  GaussianSpec g({0.0}, {1.0});
  SamplePool a = g.sample(1, 77u);
  SamplePool b = g.sample(1, 77u);
  CHECK(a.row(0)[0] == b.row(0)[0]);

  const std::size_t n = 1000000;
  SamplePool big = g.sample(n, 123u);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += big.row(i)[0];
  mean /= static_cast<double>(n);
  CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));

  GaussianSpec g2({0.0, 0.0}, {1.0, 0.5, 0.5, 1.0});
  SamplePool big2 = g2.sample(n, 5u);
  double cov = 0.0;
  for (std::size_t i = 0; i < n; ++i) cov += big2.row(i)[0] * big2.row(i)[1];
  cov /= static_cast<double>(n);
  CHECK(std::abs(cov - 0.5) < 0.01);
}

TEST_CASE("univariate quantiles") {
  GaussianSpec g({0.0}, {1.0});
  CHECK(g.quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(g.quantile(0.975) == doctest::Approx(1.959964).epsilon(1e-6));
  GaussianSpec shifted({2.0}, {9.0});
  CHECK(shifted.quantile(0.5) == doctest::Approx(2.0).epsilon(1e-12));
  GaussianSpec g2({0.0, 0.0}, {1.0, 0.0, 0.0, 1.0});
  CHECK_THROWS_AS(g2.quantile(0.5), DimensionError);
  CHECK_THROWS_AS(g.quantile(0.0), DomainError);
}

TEST_CASE("inverse normal cdf against bisection reference") {
  // Reference values from bisection on the erf-based CDF.
  CHECK(standard_normal_inv_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(standard_normal_inv_cdf(0.975) == doctest::Approx(1.9599639845400545).epsilon(1e-9));
  CHECK(standard_normal_inv_cdf(0.0013498980316300945) == doctest::Approx(-3.0).epsilon(1e-9));
  CHECK_THROWS_AS(standard_normal_inv_cdf(0.0), DomainError);
}

TEST_CASE("cdf estimate dominance counts") {
  SamplePool pool(2, {0, 0, 1, 1, 2, 2, 3, 3}, std::nullopt);
  CHECK(cdf_estimate(pool, {1.5, 1.5}) == 0.5);
  CHECK(cdf_estimate(pool, {-1.0, -1.0}) == 0.0);
  CHECK(cdf_estimate(pool, {3.0, 3.0}) == 1.0);
}

TEST_CASE("lpm estimate hand evaluations") {
  SamplePool single(2, {0.0, 0.0}, std::nullopt);
  CHECK(lpm_estimate(single, {2.0, 3.0}, 1) == 6.0);
  SamplePool high(2, {5.0, 5.0}, std::nullopt);
  CHECK(lpm_estimate(high, {0.0, 0.0}, 1) == 0.0);
}

TEST_CASE("lpm at order zero is the cdf estimate, bit for bit") {
  GaussianSpec g({0.0, 0.0}, {1.0, 0.3, 0.3, 1.0});
  SamplePool pool = g.sample(500, 9u);
  SamplePool zs = g.sample(100, 10u);
  for (std::size_t i = 0; i < zs.size(); ++i) {
    Point z = zs.draw(i);
    CHECK(lpm_estimate(pool, z, 0) == cdf_estimate(pool, z));
  }
}

TEST_CASE("dirac transform hand evaluations") {
  CHECK(dirac_transform({0.0, 0.0}, {1.0, 1.0}, 0) == 1.0);
  CHECK(dirac_transform({0.0, 0.0}, {1.0, -1.0}, 0) == 0.0);
  CHECK(dirac_transform({0.0, 1.0}, {2.0, 3.0}, 2) == 4.0);
  // 0^0 = 1 at the boundary
  CHECK(dirac_transform({1.0, 1.0}, {1.0, 1.0}, 0) == 1.0);
}

TEST_CASE("dirac transform equals a singleton-pool lpm estimate exactly") {
  GaussianSpec g({0.0, 0.0}, {1.0, 0.0, 0.0, 1.0});
  SamplePool ys = g.sample(50, 21u);
  SamplePool zs = g.sample(50, 22u);
  for (int k : {0, 1, 2, 3}) {
    for (std::size_t i = 0; i < ys.size(); ++i) {
      Point y = ys.draw(i);
      Point z = zs.draw(i);
      SamplePool singleton(2, std::vector<double>(y), std::nullopt);
      CHECK(dirac_transform(y, z, k) == lpm_estimate(singleton, z, k));
    }
  }
}

TEST_CASE("pool file round trip") {
  GaussianSpec g({0.0, 0.0}, {1.0, 0.2, 0.2, 1.0});
  SamplePool pool = g.sample(37, 4u);
  std::stringstream ss;
  write_pool(pool, ss);
  SamplePool back = read_pool(ss, "roundtrip");
  REQUIRE(back.size() == pool.size());
  REQUIRE(back.dim() == pool.dim());
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (std::size_t j = 0; j < pool.dim(); ++j) CHECK(back.row(i)[j] == pool.row(i)[j]);
  CHECK(back.seed() == pool.seed());
}

TEST_CASE("malformed pool input is rejected") {
  std::stringstream a("2 x 12\n");
  CHECK_THROWS_AS(read_pool(a, "a"), IngestError);
  std::stringstream b("2 2 external\n0.0 0.0\n1.0\n");
  CHECK_THROWS_AS(read_pool(b, "b"), IngestError);
  std::stringstream c("");
  CHECK_THROWS_AS(read_pool(c, "c"), IngestError);
}

TEST_CASE("seed stream derivation separates streams") {
  CHECK(derive_stream_seed(42u, 0) != derive_stream_seed(42u, 1));
  CHECK(derive_stream_seed(42u, 0) == derive_stream_seed(42u, 0));
}
