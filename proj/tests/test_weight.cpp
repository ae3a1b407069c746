#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "levelscore/weight.hpp"

using namespace levelscore;

TEST_CASE("constant integrand") {
  WeightMeasure w(GaussianSpec({0.0}, {1.0}), 1000, 1u);
  MeanResult r = w.expectation([](const double*) { return 1.0; });
  CHECK(r.estimate == 1.0);
  CHECK(r.std_error == 0.0);
}

TEST_CASE("saturated indicator") {
  WeightMeasure w(GaussianSpec({0.0, 0.0}, {1.0, 0.0, 0.0, 1.0}), 2000, 2u);
  MeanResult r = w.expectation([](const double* z) {
    return (z[0] >= -100.0 && z[1] >= -100.0) ? 1.0 : 0.0;
  });
  CHECK(r.estimate == 1.0);
}

TEST_CASE("second moment of a standard normal") {
  WeightMeasure w(GaussianSpec({0.0}, {1.0}), 1000000, 3u);
  MeanResult r = w.expectation([](const double* z) { return z[0] * z[0]; });
  CHECK(std::abs(r.estimate - 1.0) < 0.006);
  // SE of Z^2 over 10^6 draws is about sqrt(2)/1000
  CHECK(r.std_error == doctest::Approx(std::sqrt(2.0) / 1000.0).epsilon(0.05));
}

TEST_CASE("linearity of the estimator") {
  WeightMeasure w(GaussianSpec({0.0}, {1.0}), 50000, 4u);
  auto g = [](const double* z) { return z[0]; };
  auto h = [](const double* z) { return z[0] * z[0] * z[0]; };
  MeanResult rg = w.expectation(g);
  MeanResult rh = w.expectation(h);
  MeanResult rc = w.expectation([&](const double* z) { return 2.0 * g(z) + 3.0 * h(z); });
  CHECK(rc.estimate == doctest::Approx(2.0 * rg.estimate + 3.0 * rh.estimate).epsilon(1e-12));
}

TEST_CASE("standard error scales like one over sqrt M") {
  auto se_at = [](std::size_t m) {
    WeightMeasure w(GaussianSpec({0.0}, {1.0}), m, 6u);
    return w.expectation([](const double* z) { return z[0] * z[0]; }).std_error;
  };
  double ratio = se_at(10000) / se_at(160000);
  CHECK(ratio > 3.0);
  CHECK(ratio < 5.3);
}

TEST_CASE("thread count does not change the result bits") {
  WeightMeasure w(GaussianSpec({0.0, 0.0}, {1.0, 0.4, 0.4, 1.0}), 100000, 7u);
  auto g = [](const double* z) { return std::exp(-z[0] * z[0]) + z[1]; };
  MeanResult r1 = w.expectation(g, 1);
  MeanResult r4 = w.expectation(g, 4);
  MeanResult r8 = w.expectation(g, 8);
  CHECK(r1.estimate == r4.estimate);
  CHECK(r1.estimate == r8.estimate);
  CHECK(r1.std_error == r8.std_error);
}

TEST_CASE("NaN integrand raises a numerical error naming the draw") {
  WeightMeasure w(GaussianSpec({0.0}, {1.0}), 100, 8u);
  CHECK_THROWS_AS(
      w.expectation([](const double*) { return std::numeric_limits<double>::quiet_NaN(); }),
      EvaluationError);
}

TEST_CASE("weight density matches the underlying Gaussian pdf") {
  GaussianSpec spec({0.0, 0.0}, {1.0, 0.0, 0.0, 1.0});
  WeightMeasure w(spec, 10, 9u);
  CHECK(w.density({0.0, 0.0}) == doctest::Approx(1.0 / (2.0 * M_PI)).epsilon(1e-12));
  CHECK(w.density({0.0, 0.0}) == spec.pdf({0.0, 0.0}));
}

TEST_CASE("pool is reproducible from the seed") {
  WeightMeasure a(GaussianSpec({0.0}, {1.0}), 500, 11u);
  WeightMeasure b(GaussianSpec({0.0}, {1.0}), 500, 11u);
  for (std::size_t i = 0; i < 500; ++i) CHECK(a.pool().row(i)[0] == b.pool().row(i)[0]);
}
