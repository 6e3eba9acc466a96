#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "mixfd/quadrature.hpp"
#include "test_support.hpp"

using namespace mixfd;

namespace {

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

// Closed-form mass of N(0,1) on [-a, a].
double normal_box_mass(double a) { return std::erf(a / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("simpson_1d is exact for cubics") {
  const auto g = QuadratureGrid::box1d(0.0, 1.0, 5);
  CHECK(std::abs(simpson_1d([](double x) { return x * x * x; }, g) - 0.25) < 1e-14);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const double a = testing::uniform(rng, -2, 2), b = testing::uniform(rng, -2, 2);
    const double c = testing::uniform(rng, -2, 2), d = testing::uniform(rng, -2, 2);
    const double lo = testing::uniform(rng, -3, 0), hi = testing::uniform(rng, 0.5, 3);
    auto prim = [&](double x) { return a * x + b * x * x / 2 + c * x * x * x / 3 + d * x * x * x * x / 4; };
    const double exact = prim(hi) - prim(lo);
    const double got = simpson_1d([&](double x) { return a + b * x + c * x * x + d * x * x * x; },
                                  QuadratureGrid::box1d(lo, hi, 3));
    CHECK(std::abs(got - exact) < 1e-12 * (1.0 + std::abs(exact)));
  }
}

TEST_CASE("simpson_1d on the standard normal") {
  const double got = simpson_1d(normal_pdf, QuadratureGrid::box1d(-8.0, 8.0, 401));
  CHECK(std::abs(got - normal_box_mass(8.0)) < 1e-10);
  CHECK(std::abs(got - 1.0) < 1e-10);
}

TEST_CASE("simpson_2d") {
  const auto unit = QuadratureGrid::box2d(0.0, 1.0, 3);
  CHECK(std::abs(simpson_2d([](double, double) { return 1.0; }, unit) - 1.0) < 1e-14);
  CHECK(std::abs(simpson_2d([](double x, double y) { return x * x * x + y * y * y; }, unit) - 0.5) <
        1e-13);

  const double got = simpson_2d([](double x, double y) { return normal_pdf(x) * normal_pdf(y); },
                                QuadratureGrid::box2d(-8.0, 8.0, 401));
  CHECK(std::abs(got - normal_box_mass(8.0) * normal_box_mass(8.0)) < 1e-8);

  // Anisotropic box: integral of x * y^2 over [0,2] x [-1,3] = 2 * 28/3.
  const auto box = QuadratureGrid::box2d(0.0, 2.0, -1.0, 3.0, 7);
  CHECK(simpson_2d([](double x, double y) { return x * y * y; }, box) ==
        doctest::Approx(56.0 / 3.0).epsilon(1e-13));
}

TEST_CASE("non-finite integrand values are reported") {
  const auto g = QuadratureGrid::box1d(-1.0, 1.0, 5);
  CHECK_THROWS_AS(simpson_1d([](double x) { return x == 0.0 ? std::nan("") : 1.0; }, g),
                  std::domain_error);
  try {
    simpson_1d([](double x) { return x == 0.5 ? std::numeric_limits<double>::infinity() : 1.0; }, g);
    FAIL("expected an exception");
  } catch (const std::domain_error& e) {
    CHECK(std::string(e.what()).find("0.5") != std::string::npos);
  }
  CHECK_THROWS_AS(simpson_2d([](double x, double y) { return std::log(x * y); },
                             QuadratureGrid::box2d(0.0, 1.0, 3)),
                  std::domain_error);
}

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(QuadratureGrid::box1d(0.0, 1.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(QuadratureGrid::box1d(0.0, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(QuadratureGrid::box1d(1.0, 1.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(QuadratureGrid::box2d(0.0, 1.0, 2.0, 1.0, 5), std::invalid_argument);
  QuadratureGrid three_d{Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3), 5};
  CHECK_THROWS_AS(three_d.validate(), std::invalid_argument);

  const auto s = QuadratureGrid::standard(2);
  CHECK(s.points_per_axis == 401);
  CHECK(s.step(0) == doctest::Approx(0.05));
  CHECK(s.node(1, 200) == doctest::Approx(0.0));
}

TEST_CASE("simpson weights") {
  const Eigen::VectorXd w = simpson_weights(5, 0.3);
  CHECK(w(0) == doctest::Approx(0.1));
  CHECK(w(1) == doctest::Approx(0.4));
  CHECK(w(2) == doctest::Approx(0.2));
  CHECK(w.sum() == doctest::Approx(1.2));
}

TEST_CASE("simpson is linear") {
  std::mt19937_64 rng(8);
  const auto g = QuadratureGrid::box2d(-3.0, 2.0, 41);
  for (int trial = 0; trial < 10; ++trial) {
    const double a = testing::uniform(rng, -5, 5), b = testing::uniform(rng, -5, 5);
    auto f = [](const Eigen::VectorXd& x) { return std::sin(x(0)) * std::exp(-x(1) * x(1)); };
    auto h = [](const Eigen::VectorXd& x) { return std::cosh(0.3 * x(0)) + x(1); };
    const double lhs = simpson([&](const Eigen::VectorXd& x) { return a * f(x) + b * h(x); }, g);
    const double rhs = a * simpson(f, g) + b * simpson(h, g);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
  }
}

TEST_CASE("estimate_normalizer") {
  const auto quad1 = [](const Eigen::VectorXd& x) { return 0.5 * x.squaredNorm(); };
  CHECK(std::abs(estimate_normalizer(quad1, QuadratureGrid::box1d(-8.0, 8.0, 401)).log_z -
                 0.5 * std::log(2.0 * std::numbers::pi)) < 1e-8);
  CHECK(std::abs(estimate_normalizer(quad1, QuadratureGrid::box2d(-8.0, 8.0, 401)).log_z -
                 std::log(2.0 * std::numbers::pi)) < 1e-7);

  const auto zero = estimate_normalizer([](const Eigen::VectorXd&) { return 0.0; },
                                        QuadratureGrid::box1d(0.0, 1.0, 5));
  CHECK(std::abs(zero.log_z) < 1e-15);
  CHECK(zero.linear() == doctest::Approx(1.0));

  // A constant shift of 5000 would overflow exp(-E); the log result just moves by the shift.
  const auto deep = estimate_normalizer(
      [&](const Eigen::VectorXd& x) { return quad1(x) - 5000.0; },
      QuadratureGrid::box1d(-8.0, 8.0, 401));
  CHECK(std::abs(deep.log_z - (5000.0 + 0.5 * std::log(2.0 * std::numbers::pi))) < 1e-8);

  CHECK_THROWS_AS(estimate_normalizer([](const Eigen::VectorXd& x) { return 1.0 / x(0); },
                                      QuadratureGrid::box1d(-1.0, 1.0, 5)),
                  std::domain_error);
}
