#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "levelscore/levelsets.hpp"

using namespace levelscore;

namespace {

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

Candidate gaussian_candidate(GaussianSpec spec, std::size_t pool_size, std::uint64_t seed) {
  Candidate c;
  c.label = "cand";
  c.pool = spec.sample(pool_size, seed);
  c.density = std::move(spec);
  return c;
}

}  // namespace

TEST_CASE("psi_eval dispatches to the right functional") {
  GaussianSpec g({0.0, 0.0}, {1.0, 0.0, 0.0, 1.0});
  Candidate c;
  c.label = "c";
  c.density = g;
  c.pool = SamplePool(2, {0.0, 0.0, 1.0, 1.0}, std::nullopt);
  CHECK(psi_eval(FunctionalKind::density(), c, {0.0, 0.0}) ==
        doctest::Approx(1.0 / (2.0 * M_PI)).epsilon(1e-12));
  CHECK(psi_eval(FunctionalKind::cdf(), c, {0.5, 0.5}) == 0.5);
  Candidate single;
  single.label = "s";
  single.pool = SamplePool(2, {0.0, 0.0}, std::nullopt);
  CHECK(psi_eval(FunctionalKind::lpm(1), single, {1.0, 1.0}) == 1.0);
}

TEST_CASE("level membership uses closed sets") {
  Candidate c;
  c.label = "c";
  c.pool = SamplePool(2, {0.0, 0.0, 1.0, 1.0}, std::nullopt);
  // alpha = 0: everything is a member
  CHECK(level_membership(LevelSpec(FunctionalKind::cdf(), 0.0), c, {-50.0, -50.0}));
  // boundary psi == alpha counts as inside
  CHECK(level_membership(LevelSpec(FunctionalKind::cdf(), 0.5), c, {0.5, 0.5}));
  CHECK_FALSE(level_membership(LevelSpec(FunctionalKind::cdf(), 0.6), c, {0.5, 0.5}));

  GaussianSpec g({0.0, 0.0}, {1.0, 0.0, 0.0, 1.0});
  Candidate cd;
  cd.label = "d";
  cd.density = g;
  CHECK_FALSE(level_membership(LevelSpec(FunctionalKind::density(), 0.2), cd, {0.0, 0.0}));
}

TEST_CASE("level sets are nested in alpha") {
  GaussianSpec g({0.0, 0.0}, {1.0, 0.3, 0.3, 1.0});
  Candidate c = gaussian_candidate(g, 400, 1u);
  SamplePool zs = g.sample(100, 2u);
  for (auto fk : {FunctionalKind::cdf(), FunctionalKind::lpm(1)}) {
    for (std::size_t i = 0; i < zs.size(); ++i) {
      Point z = zs.draw(i);
      bool outer = level_membership(LevelSpec(fk, 0.1), c, z);
      bool inner = level_membership(LevelSpec(fk, 0.4), c, z);
      if (inner) CHECK(outer);
    }
  }
}

TEST_CASE("density level score closed-form oracle") {
  // Candidate N(0,1), weight N(0,1), alpha = phi(1): level set is [-1, 1].
  GaussianSpec std1({0.0}, {1.0});
  const double alpha = std1.pdf({1.0});
  const double term1 = alpha * (std_normal_cdf(1.0) - std_normal_cdf(-1.0));
  const double term2 = std1.pdf({0.0});
  const double oracle = term1 - term2;
  CHECK(oracle == doctest::Approx(-0.23374).epsilon(1e-4));

  Candidate c;
  c.label = "std";
  c.density = std1;
  WeightMeasure w(std1, 100000, 3u);
  ScoreValue s = density_level_score(c, alpha, {0.0}, w);
  CHECK(std::abs(s.value - oracle) < 4.0 * s.std_error + 1e-9);
}

TEST_CASE("density level score above the mode is zero") {
  GaussianSpec std1({0.0}, {1.0});
  Candidate c;
  c.label = "std";
  c.density = std1;
  WeightMeasure w(std1, 1000, 4u);
  ScoreValue s = density_level_score(c, 0.5, {0.0}, w);  // mode density ~ 0.399 < 0.5
  CHECK(s.value == 0.0);
}

TEST_CASE("cdf level score with empty intersection") {
  GaussianSpec g({0.0, 0.0}, {1.0, 0.0, 0.0, 1.0});
  Candidate c = gaussian_candidate(g, 300, 5u);
  WeightMeasure w(g, 3000, 6u);
  const double alpha = 0.3;
  const Point y{100.0, 100.0};
  ScoreValue s = cdf_level_score(c, alpha, y, w);
  MeanResult lam = w.expectation([&](const double* z) {
    return cdf_estimate(c.require_pool(), Point(z, z + 2)) >= alpha ? 1.0 : 0.0;
  });
  CHECK(s.value == doctest::Approx(alpha * lam.estimate).epsilon(1e-12));
}

TEST_CASE("lpm level score at alpha zero is minus the expected proxy") {
  GaussianSpec g({0.0, 0.0}, {1.0, 0.0, 0.0, 1.0});
  Candidate c = gaussian_candidate(g, 300, 7u);
  WeightMeasure w(g, 3000, 8u);
  const Point y{0.1, -0.2};
  for (int k : {0, 1, 2}) {
    ScoreValue s = lpm_level_score(c, 0.0, y, k, w);
    MeanResult proxy =
        w.expectation([&](const double* z) { return dirac_transform(y, Point(z, z + 2), k); });
    CHECK(s.value == -proxy.estimate);
  }
}

TEST_CASE("cdf level score is the k=0 lpm level score, bit for bit") {
  GaussianSpec g({0.0, 0.0}, {1.0, 0.5, 0.5, 1.0});
  Candidate c = gaussian_candidate(g, 400, 9u);
  WeightMeasure w(g, 5000, 10u);
  SamplePool ys = g.sample(25, 11u);
  for (double alpha : {0.1, 0.5, 0.9}) {
    for (std::size_t i = 0; i < ys.size(); ++i) {
      Point y = ys.draw(i);
      ScoreValue a = cdf_level_score(c, alpha, y, w);
      ScoreValue b = lpm_level_score(c, alpha, y, 0, w);
      CHECK(a.value == b.value);
      CHECK(a.std_error == b.std_error);
    }
  }
}

TEST_CASE("type-7 quantiles") {
  std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  CHECK(quantile_type7(v, 0.0) == 1.0);
  CHECK(quantile_type7(v, 1.0) == 4.0);
  CHECK(quantile_type7(v, 0.5) == 2.5);
  std::vector<double> nine{1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK(quantile_type7(nine, 0.5) == 5.0);
}

TEST_CASE("alpha selection returns functional quantiles at the observations") {
  // Psi values 1..9 via a cdf functional: pool {1..9} in 1-d, observations
  // z=1..9 give F(z) = z/9, so the 0.5 level picks the middle order statistic.
  std::vector<double> pool_data;
  std::vector<double> obs_data;
  for (int i = 1; i <= 9; ++i) {
    pool_data.push_back(static_cast<double>(i));
    obs_data.push_back(static_cast<double>(i));
  }
  Candidate c;
  c.label = "c";
  c.pool = SamplePool(1, pool_data, std::nullopt);
  SamplePool obs(1, obs_data, std::nullopt);
  auto alphas = alpha_select(FunctionalKind::cdf(), c, obs, {0.5});
  REQUIRE(alphas.size() == 1);
  CHECK(alphas[0] == 5.0 / 9.0);
}

TEST_CASE("contour grid shape and density diagonal elongation") {
  GaussianSpec g({0.0, 0.0}, {1.0, 0.8, 0.8, 1.0});
  Candidate c;
  c.label = "c";
  c.density = g;
  c.pool = g.sample(400, 12u);
  GridAxis ax{-2.0, 2.0, 21};
  ContourGrid grid = contour_grid(FunctionalKind::density(), c, {ax, ax});
  REQUIRE(grid.values.size() == 21 * 21);
  // max at the origin node (index 10 along each axis, row-major x-outer)
  std::size_t origin = 10 * 21 + 10;
  for (double v : grid.values) CHECK(v <= grid.values[origin]);
  // correlated density is larger along the diagonal than across it
  CHECK(g.pdf({1.0, 1.0}) > g.pdf({1.0, -1.0}));
  std::size_t diag = 15 * 21 + 15, anti = 15 * 21 + 5;
  CHECK(grid.values[diag] > grid.values[anti]);
}

TEST_CASE("cdf contour grid is monotone along each axis") {
  GaussianSpec g({0.0, 0.0}, {1.0, 0.2, 0.2, 1.0});
  Candidate c;
  c.label = "c";
  c.pool = g.sample(500, 13u);
  GridAxis ax{-2.0, 2.0, 15};
  ContourGrid grid = contour_grid(FunctionalKind::cdf(), c, {ax, ax});
  for (std::size_t ix = 0; ix < 15; ++ix)
    for (std::size_t iy = 1; iy < 15; ++iy)
      CHECK(grid.values[ix * 15 + iy] >= grid.values[ix * 15 + iy - 1]);
  for (std::size_t iy = 0; iy < 15; ++iy)
    for (std::size_t ix = 1; ix < 15; ++ix)
      CHECK(grid.values[ix * 15 + iy] >= grid.values[(ix - 1) * 15 + iy]);
}

TEST_CASE("level spec validation") {
  CHECK_THROWS_AS(LevelSpec(FunctionalKind::cdf(), -0.1), DomainError);
  CHECK_THROWS_AS(LevelSpec(FunctionalKind::cdf(), 1.5), DomainError);
  LevelSpec ok(FunctionalKind::lpm(2), 3.0);  // lpm levels may exceed 1
  CHECK(ok.alpha == 3.0);
}
