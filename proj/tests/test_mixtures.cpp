#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "mixfd/mixtures.hpp"
#include "mixfd/quadrature.hpp"
#include "test_support.hpp"

using namespace mixfd;
using mixfd::testing::central_gradient;

namespace {

Vector v1(double x) { return Vector::Constant(1, x); }
Vector v2(double x, double y) { return Eigen::Vector2d(x, y); }

AnalyticDensity standard_normal() { return GaussianComponent::isotropic(v1(0.0), 1.0); }

AnalyticDensity correlated_2d() {
  Matrix cov(2, 2);
  cov << 2.0, 0.6, 0.6, 0.5;
  return GaussianComponent(v2(1.0, -0.5), cov);
}

AnalyticDensity disjoint_truncated(double alpha) {
  const TruncatedGaussian left(v1(-5.0), v1(1.0), v1(-8.0), v1(-2.0));
  const TruncatedGaussian right(v1(5.0), v1(1.0), v1(2.0), v1(8.0));
  return two_component(left, right, alpha);
}

void check_score_matches_fd(const AnalyticDensity& d, const Vector& x) {
  const Vector s = d.score(x);
  const Vector fd = central_gradient([&](const Vector& y) { return d.log_density(y); }, x, 1e-5);
  CHECK((s - fd).norm() <= 1e-5 * (1.0 + s.norm()));
}

}  // namespace

TEST_CASE("log_density closed forms and support") {
  CHECK(log_density(standard_normal(), v1(0.0)) ==
        doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-15));
  CHECK(log_density(standard_normal(), v1(0.0)) == doctest::Approx(-0.9189385332));

  // Direct (linear-space) summation oracle for a well separated pair.
  const auto mix = make_mixture({GaussianComponent::isotropic(v1(-5.0), 1.0),
                                 GaussianComponent::isotropic(v1(5.0), 1.0)},
                                {0.5, 0.5});
  const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  const double direct = std::log(0.5 * c * std::exp(-50.0) + 0.5 * c);
  CHECK(std::abs(log_density(mix, v1(5.0)) - direct) < 1e-14);
  CHECK(std::abs(log_density(mix, v1(5.0)) - (std::log(0.5) + std::log(c))) < 1e-20 + 1e-15);

  const AnalyticDensity trunc = TruncatedGaussian(v1(0.5), v1(1.0), v1(0.0), v1(1.0));
  CHECK(log_density(trunc, v1(-1.0)) == -std::numeric_limits<double>::infinity());
  CHECK(log_density(trunc, v1(0.0)) == -std::numeric_limits<double>::infinity());
  CHECK(std::isfinite(log_density(trunc, v1(0.5))));

  CHECK_THROWS_AS(log_density(standard_normal(), v2(0.0, 0.0)), std::invalid_argument);
  CHECK_THROWS_AS(log_density(concentric_rings(), v1(0.0)), std::invalid_argument);
}

TEST_CASE("score examples") {
  CHECK(score(standard_normal(), v1(1.0))(0) == doctest::Approx(-1.0));
  CHECK(score(correlated_2d(), v2(1.0, -0.5)).norm() == doctest::Approx(0.0));

  // Posterior weights at 0 are (0.2, 0.8), component scores (+5, -5) -> 5 (1 - 2 * 0.2).
  const auto toy = toy_mixture_1d(0.2);
  CHECK(score(toy, v1(0.0))(0) == doctest::Approx(3.0).epsilon(1e-12));
  check_score_matches_fd(toy, v1(0.0));

  const auto trunc = disjoint_truncated(0.3);
  CHECK_THROWS_AS(score(trunc, v1(0.0)), std::domain_error);
  CHECK_THROWS_AS(score(trunc, v1(2.0)), std::domain_error);  // boundary
  CHECK_THROWS_AS(score(trunc, v1(9.0)), std::domain_error);
  // Inside one piece the far component contributes nothing.
  CHECK(score(trunc, v1(-4.0))(0) == doctest::Approx(-1.0));
}

TEST_CASE("score equals finite-difference gradient of log_density for every density kind") {
  std::mt19937_64 rng(11);
  const std::vector<std::pair<AnalyticDensity, double>> cases = {
      {standard_normal(), 6.0},
      {correlated_2d(), 5.0},
      {toy_mixture_1d(0.2), 9.0},
      {four_gaussians(), 9.0},
      {concentric_rings(), 6.0},
      {RingComponent(3.0, 0.2), 4.0},
  };
  for (const auto& [d, half_width] : cases) {
    for (int i = 0; i < 100; ++i) {
      check_score_matches_fd(d, mixfd::testing::uniform_vector(rng, d.dim(), -half_width, half_width));
    }
  }
  // Truncated: stay 1e-3 away from the box faces so the stencil is interior.
  const auto trunc = disjoint_truncated(0.4);
  for (int i = 0; i < 100; ++i) {
    const double side = i % 2 ? 1.0 : -1.0;
    check_score_matches_fd(trunc, v1(side * mixfd::testing::uniform(rng, 2.001, 7.999)));
  }
}

TEST_CASE("mixture score is the posterior-weighted component score") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<AnalyticDensity> comps;
    for (int k = 0; k < 2; ++k) {
      Matrix a = Matrix::Random(2, 2);
      Matrix cov = a * a.transpose() + 0.3 * Matrix::Identity(2, 2);
      comps.emplace_back(GaussianComponent(mixfd::testing::uniform_vector(rng, 2, -3, 3), cov));
    }
    const double w = mixfd::testing::uniform(rng, 0.05, 0.95);
    const auto mix = make_mixture(comps, {w, 1.0 - w});
    for (int i = 0; i < 5; ++i) {
      const Vector x = mixfd::testing::uniform_vector(rng, 2, -4, 4);
      check_score_matches_fd(mix, x);
      const double p1 = w * comps[0].density(x);
      const double p2 = (1.0 - w) * comps[1].density(x);
      const Vector expected = (p1 * comps[0].score(x) + p2 * comps[1].score(x)) / (p1 + p2);
      CHECK((mix.score(x) - expected).norm() <= 1e-10 * (1.0 + expected.norm()));
    }
  }
}

TEST_CASE("densities integrate to one by Simpson's rule") {
  const auto g1 = QuadratureGrid::box1d(-8.0, 8.0, 801);
  CHECK(std::abs(simpson([&](const Vector& x) { return standard_normal().density(x); }, g1) - 1.0) <
        1e-6);

  const auto c2 = correlated_2d();
  const auto g2 = QuadratureGrid::box2d(-11.0, 13.0, -5.5, 4.5, 601);
  CHECK(std::abs(simpson([&](const Vector& x) { return c2.density(x); }, g2) - 1.0) < 1e-6);

  // Radius 5 + 8 sd = 6.6; resolve the 0.2 radial width with h = 0.02.
  const auto rings = concentric_rings();
  const auto gr = QuadratureGrid::box2d(-6.6, 6.6, 661);
  CHECK(std::abs(simpson([&](const Vector& x) { return rings.density(x); }, gr) - 1.0) < 1e-6);

  const auto trunc = disjoint_truncated(0.3);
  // The density jumps at the box faces, so only a loose check here.
  CHECK(std::abs(simpson([&](const Vector& x) { return trunc.density(x); },
                         QuadratureGrid::box1d(-10.0, 10.0, 2001)) -
                 1.0) < 1e-3);
}

TEST_CASE("sampling statistics") {
  const PointSet xs = sample(standard_normal(), 10000, 1);
  const double mean = xs.mean();
  const double var = (xs.array() - mean).square().mean();
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(var - 1.0) < 0.05);

  const PointSet ys = sample(toy_mixture_1d(0.2), 10000, 3);
  const double left = (ys.array() < 0.0).cast<double>().mean();
  CHECK(left >= 0.17);
  CHECK(left <= 0.23);

  const PointSet one = sample(four_gaussians(), 1, 42);
  CHECK(one.rows() == 2);
  CHECK(one.cols() == 1);

  CHECK_THROWS(sample(standard_normal(), 0, 1));
}

TEST_CASE("ring sampler matches the planar ring density") {
  // Mean radius under p(x) ~ exp(-(|x| - R)^2 / 2s^2) is  int r^2 e / int r e.
  // Oracle: plain trapezoid rule on a fine radial grid.
  const double radius = 1.0;
  const double sd = 0.2;
  double num = 0.0;
  double den = 0.0;
  const int n = 200000;
  const double h = (radius + 10.0 * sd) / n;
  for (int i = 0; i <= n; ++i) {
    const double r = i * h;
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    const double e = std::exp(-(r - radius) * (r - radius) / (2.0 * sd * sd));
    num += w * r * r * e;
    den += w * r * e;
  }
  const double expected_mean_radius = num / den;

  const PointSet xs = sample(RingComponent(radius, sd), 40000, 9);
  const double mean_radius = xs.colwise().norm().mean();
  CHECK(std::abs(mean_radius - expected_mean_radius) < 0.004);
  // A plain N(radius, sd^2) radius draw would sit near 1.0; the planar density sits near 1.04.
  CHECK(expected_mean_radius > 1.03);

  // The cached log-normalizer agrees with the trapezoid oracle.
  CHECK(RingComponent(radius, sd).log_normalizer() ==
        doctest::Approx(std::log(2.0 * std::numbers::pi * den * h)).epsilon(1e-9));
}

TEST_CASE("sampling is reproducible bit-for-bit") {
  for (const auto& d : {four_gaussians(), concentric_rings(), disjoint_truncated(0.25)}) {
    const PointSet a = sample(d, 500, 77);
    const PointSet b = sample(d, 500, 77);
    CHECK((a.array() == b.array()).all());
    const PointSet c = sample(d, 500, 78);
    CHECK_FALSE((a.array() == c.array()).all());
  }
}

TEST_CASE("augment") {
  const auto p = toy_mixture_1d(0.2);
  const AnalyticDensity m = GaussianComponent::isotropic(v1(0.0), 9.0);
  const auto aug = augment(p, m, 0.5);
  for (double x : {-7.0, -5.0, -1.0, 0.0, 2.5, 5.0, 9.0}) {
    const double expected = 0.5 * p.density(v1(x)) + 0.5 * m.density(v1(x));
    CHECK(aug.density(v1(x)) == doctest::Approx(expected).epsilon(1e-13));
    const double lse = std::log(expected);
    CHECK(aug.log_density(v1(x)) == doctest::Approx(lse).epsilon(1e-13));
  }
  CHECK_THROWS_AS(augment(p, m, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(augment(p, m, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(augment(p, four_gaussians(), 0.5), std::invalid_argument);
}

TEST_CASE("moment_match") {
  PointSet pts(2, 4);
  pts << 0, 2, 0, 2,
         0, 0, 2, 2;
  const auto g = moment_match(pts);
  CHECK(g.mean()(0) == doctest::Approx(1.0));
  CHECK(g.mean()(1) == doctest::Approx(1.0));
  CHECK(g.cov()(0, 0) == doctest::Approx(1.0 + 1e-6).epsilon(1e-14));
  CHECK(g.cov()(1, 1) == doctest::Approx(1.0 + 1e-6).epsilon(1e-14));
  CHECK(std::abs(g.cov()(0, 1)) < 1e-15);

  const auto big = moment_match(sample(GaussianComponent::isotropic(v2(0, 0), 1.0), 10000, 4));
  CHECK(big.mean().cwiseAbs().maxCoeff() < 0.05);
  CHECK((big.cov() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 0.1);

  PointSet same(2, 5);
  same.colwise() = v2(1.5, -2.0);
  CHECK_THROWS_AS(moment_match(same), std::invalid_argument);
  CHECK_THROWS_AS(moment_match(pts.leftCols(2)), std::invalid_argument);
}

TEST_CASE("density specs survive a JSON round trip") {
  std::mt19937_64 rng(21);
  const auto mix = make_mixture({correlated_2d(), concentric_rings(), four_gaussians()},
                                {0.2, 0.5, 0.3});
  const auto back = density_from_json(nlohmann::json::parse(to_json(mix).dump()));
  for (int i = 0; i < 50; ++i) {
    const Vector x = mixfd::testing::uniform_vector(rng, 2, -7, 7);
    CHECK(back.log_density(x) == mix.log_density(x));
  }
  const auto trunc = disjoint_truncated(0.6);
  const auto tback = density_from_json(to_json(trunc));
  CHECK(tback.log_density(v1(-3.0)) == trunc.log_density(v1(-3.0)));

  CHECK_THROWS(density_from_json(nlohmann::json{{"kind", "kde"}}));
  CHECK_THROWS(density_from_json(nlohmann::json::parse(
      R"({"kind":"mixture","weights":[0.5,0.6],"components":[)"
      R"({"kind":"ring","radius":1,"radial_std":0.2},{"kind":"ring","radius":2,"radial_std":0.2}]})")));
}
