#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "mixfd/ebm.hpp"
#include "test_support.hpp"

using namespace mixfd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> xs) {
  VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

// f(x) = 1/2 ||x||^2 in d = 2: square each coordinate, then average with weight 1/2.
MlpEnergy half_square_norm(int d) {
  MlpEnergy f = zero_mlp({d, d, 1}, Activation::square);
  f.weights[0] = MatrixXd::Identity(d, d);
  f.weights[1] = MatrixXd::Constant(1, d, 0.5);
  return f;
}

// f(x1, x2) = x1^2 x2 via polarization: x2 = ((x2+1)^2 - (x2-1)^2)/4 and
// ab = ((a+b)^2 - (a-b)^2)/4 with a = x1^2, b = x2.
MlpEnergy x1_squared_x2() {
  MlpEnergy f = zero_mlp({2, 3, 2, 1}, Activation::square);
  f.weights[0] << 1, 0,
                  0, 1,
                  0, 1;
  f.biases[0] << 0, 1, -1;
  f.weights[1] << 1, 0.25, -0.25,
                  1, -0.25, 0.25;
  f.weights[2] << 0.25, -0.25;
  return f;
}

double rel_err(double got, double want, double floor) {
  return std::abs(got - want) / std::max(std::abs(want), floor);
}

MlpEnergy random_net(std::mt19937_64& rng, Activation a, std::vector<int> dims) {
  MlpEnergy f = init_mlp(std::move(dims), a, rng());
  // Nonzero biases so the oracles do not only see symmetric configurations.
  for (auto& b : f.biases) b = testing::uniform_vector(rng, b.size(), -0.5, 0.5);
  return f;
}

}  // namespace

TEST_CASE("activation jets agree with finite differences") {
  for (Activation a : {Activation::swish, Activation::tanh, Activation::square}) {
    for (double u = -6.0; u <= 6.0; u += 0.37) {
      const double h = 1e-5;
      const Jet j = activation_jet(a, u), jp = activation_jet(a, u + h), jm = activation_jet(a, u - h);
      CHECK(std::abs((jp.f - jm.f) / (2 * h) - j.d1) < 1e-8);
      CHECK(std::abs((jp.d1 - jm.d1) / (2 * h) - j.d2) < 1e-8);
      CHECK(std::abs((jp.d2 - jm.d2) / (2 * h) - j.d3) < 1e-8);
    }
  }
  const Jet s0 = activation_jet(Activation::swish, 0.0);
  CHECK(s0.f == 0.0);
  CHECK(s0.d1 == doctest::Approx(0.5));
  CHECK(s0.d2 == doctest::Approx(0.5));
}

TEST_CASE("energy examples") {
  MlpEnergy lin = zero_mlp({1, 1}, Activation::swish);
  lin.weights[0](0, 0) = 2.0;
  lin.biases[0](0) = 1.0;
  CHECK(energy(lin, vec({3.0})) == 7.0);

  MlpEnergy c = zero_mlp({2, 8, 8, 1}, Activation::swish);
  c.biases.back()(0) = 1.75;
  CHECK(energy(c, vec({0.3, -9.0})) == 1.75);
  CHECK(energy(c, vec({100.0, 4.0})) == 1.75);
  CHECK(energy_grad_x(c, vec({0.3, -9.0})).norm() == 0.0);

  std::mt19937_64 rng(1);
  const MlpEnergy f = random_net(rng, Activation::swish, {2, 16, 16, 1});
  const VectorXd x = vec({0.4, -1.2});
  CHECK(energy(f, x) == energy(f, x));

  MatrixXd pts(2, 5);
  pts.setRandom();
  const VectorXd batch = energy_batch(f, pts);
  for (int i = 0; i < 5; ++i) CHECK(batch(i) == doctest::Approx(energy(f, pts.col(i))).epsilon(1e-14));

  CHECK_THROWS_AS(energy(f, vec({1.0})), std::invalid_argument);
  CHECK_THROWS_AS(energy_grad_x(f, vec({1.0, 2.0, 3.0})), std::invalid_argument);
  CHECK_THROWS_AS(energy_hessian_trace(f, vec({1.0})), std::invalid_argument);
}

TEST_CASE("hand-built polynomial networks") {
  const MlpEnergy q = half_square_norm(2);
  const VectorXd x = vec({0.7, -2.0});
  CHECK(energy(q, x) == doctest::Approx(0.5 * x.squaredNorm()));
  CHECK((energy_grad_x(q, x) - x).norm() < 1e-15);
  CHECK(energy_hessian_trace(q, x) == doctest::Approx(2.0));

  const MlpEnergy p = x1_squared_x2();
  const VectorXd y = vec({1.0, 3.0});
  CHECK(energy(p, y) == doctest::Approx(3.0));
  CHECK((energy_grad_x(p, y) - vec({6.0, 1.0})).norm() < 1e-13);
  CHECK(energy_hessian_trace(p, y) == doctest::Approx(6.0));
  CHECK(energy_hessian_trace(p, vec({-2.0, 0.5})) == doctest::Approx(1.0));
}

TEST_CASE("input gradient matches finite differences") {
  std::mt19937_64 rng(2);
  for (Activation a : {Activation::swish, Activation::tanh}) {
    for (int trial = 0; trial < 100; ++trial) {
      const MlpEnergy f = random_net(rng, a, {2, 16, 16, 1});
      const VectorXd x = testing::uniform_vector(rng, 2, -3, 3);
      const VectorXd g = energy_grad_x(f, x);
      const VectorXd fd = testing::central_gradient([&](const VectorXd& z) { return energy(f, z); }, x, 1e-5);
      CHECK((g - fd).norm() <= 1e-5 * std::max(g.norm(), 1e-3));
    }
  }
}

TEST_CASE("Hessian trace matches second differences") {
  std::mt19937_64 rng(3);
  for (Activation a : {Activation::swish, Activation::tanh}) {
    for (int trial = 0; trial < 100; ++trial) {
      const MlpEnergy f = random_net(rng, a, {2, 16, 16, 1});
      const VectorXd x = testing::uniform_vector(rng, 2, -3, 3);
      const double tr = energy_hessian_trace(f, x);
      const double fd = testing::second_difference_trace([&](const VectorXd& z) { return energy(f, z); }, x, 1e-3);
      CHECK(rel_err(tr, fd, 1e-2) <= 1e-3);
    }
  }
  for (int trial = 0; trial < 10; ++trial) {
    const MlpEnergy f = random_net(rng, Activation::swish, {2, 12, 12, 1});
    const VectorXd x = testing::uniform_vector(rng, 2, -2, 2);
    const MatrixXd hess = testing::central_hessian([&](const VectorXd& z) { return energy(f, z); }, x, 1e-3);
    CHECK(rel_err(energy_hessian_trace(f, x), hess.trace(), 1e-2) <= 1e-3);
  }
}

TEST_CASE("sm_loss") {
  const MlpEnergy q = half_square_norm(1);
  MatrixXd zero(1, 1);
  zero << 0.0;
  CHECK(sm_loss(q, zero) == doctest::Approx(-1.0));

  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  MatrixXd xs(1, 100000);
  for (Eigen::Index i = 0; i < xs.cols(); ++i) xs(0, i) = n01(rng);
  CHECK(std::abs(sm_loss(q, xs) + 0.5) < 0.02);

  CHECK_THROWS_AS(sm_loss(q, MatrixXd(1, 0)), std::invalid_argument);

  // Batched kernel agrees with the per-point gradient and trace.
  for (Activation a : {Activation::swish, Activation::tanh}) {
    const MlpEnergy f = random_net(rng, a, {2, 10, 10, 10, 1});
    MatrixXd batch(2, 7);
    for (int c = 0; c < 7; ++c) batch.col(c) = testing::uniform_vector(rng, 2, -3, 3);
    double expected = 0.0;
    for (int c = 0; c < 7; ++c) {
      expected += 0.5 * energy_grad_x(f, batch.col(c)).squaredNorm() - energy_hessian_trace(f, batch.col(c));
    }
    CHECK(sm_loss(f, batch) == doctest::Approx(expected / 7.0).epsilon(1e-12));
  }
}

TEST_CASE("sm_loss ignores a constant shift of the energy") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    MlpEnergy f = random_net(rng, Activation::swish, {2, 8, 8, 1});
    MatrixXd batch(2, 20);
    for (int c = 0; c < 20; ++c) batch.col(c) = testing::uniform_vector(rng, 2, -3, 3);
    const double before = sm_loss(f, batch);
    f.biases.back()(0) += testing::uniform(rng, -50, 50);
    CHECK(std::abs(sm_loss(f, batch) - before) <= 1e-12 * std::max(1.0, std::abs(before)));
  }
}

TEST_CASE("non-finite loss names the sample") {
  const MlpEnergy q = half_square_norm(1);
  MatrixXd batch(1, 4);
  batch << 0.1, 0.2, 1e300, 0.3;
  try {
    sm_loss(q, batch);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.index() == 2);
  }
  CHECK_THROWS_AS(sm_loss_and_grad(q, batch), NumericalError);
}

TEST_CASE("parameter gradient of sm_loss") {
  // f(x) = theta x: loss = 1/2 theta^2 and d/dtheta = theta.
  MlpEnergy lin = zero_mlp({1, 1}, Activation::swish);
  lin.weights[0](0, 0) = 1.7;
  MatrixXd pts(1, 3);
  pts << -1.0, 0.5, 2.0;
  const auto lg = sm_loss_and_grad(lin, pts);
  CHECK(lg.loss == doctest::Approx(0.5 * 1.7 * 1.7));
  CHECK(lg.grad(0) == doctest::Approx(1.7));
  CHECK(lg.grad(1) == 0.0);

  // Constant energy: no gradient flows anywhere except through the (vanishing) Hessian path.
  const MlpEnergy c = zero_mlp({2, 6, 6, 1}, Activation::tanh);
  MatrixXd batch(2, 4);
  batch.setRandom();
  const ParameterVector gc = sm_loss_grad_params(c, batch);
  CHECK(gc.size() == static_cast<Eigen::Index>(c.parameter_count()));
  CHECK(sm_loss(c, batch) == 0.0);
  CHECK(gc.cwiseAbs().maxCoeff() == 0.0);

  std::mt19937_64 rng(6);
  for (Activation a : {Activation::swish, Activation::tanh}) {
    for (int trial = 0; trial < 100; ++trial) {
      MlpEnergy f = random_net(rng, a, {2, 8, 8, 1});
      MatrixXd b(2, 3);
      for (int k = 0; k < 3; ++k) b.col(k) = testing::uniform_vector(rng, 2, -3, 3);
      const ParameterVector theta = flatten(f);
      const ParameterVector grad = sm_loss_grad_params(f, b);
      const int directions = trial < 5 ? 20 : 1;
      for (int k = 0; k < directions; ++k) {
        const ParameterVector v = testing::uniform_vector(rng, theta.size(), -1, 1).normalized();
        const double eps = 1e-4;
        MlpEnergy fp = f, fm = f;
        unflatten(fp, theta + eps * v);
        unflatten(fm, theta - eps * v);
        const double fd = (sm_loss(fp, b) - sm_loss(fm, b)) / (2 * eps);
        CHECK(rel_err(grad.dot(v), fd, 1e-2) <= 1e-4);
      }
    }
  }
}

TEST_CASE("loss and gradient entry points agree") {
  std::mt19937_64 rng(7);
  const MlpEnergy f = random_net(rng, Activation::swish, {2, 12, 12, 12, 1});
  MatrixXd b(2, 9);
  for (int k = 0; k < 9; ++k) b.col(k) = testing::uniform_vector(rng, 2, -3, 3);
  const auto lg = sm_loss_and_grad(f, b);
  CHECK(lg.loss == doctest::Approx(sm_loss(f, b)).epsilon(1e-13));
  CHECK((lg.grad - sm_loss_grad_params(f, b)).norm() == 0.0);
}

TEST_CASE("flatten, unflatten and parameter count") {
  const MlpEnergy f = init_mlp({2, 5, 3, 1}, Activation::tanh, 9);
  CHECK(f.parameter_count() == 2 * 5 + 5 + 5 * 3 + 3 + 3 + 1);
  const ParameterVector theta = flatten(f);
  CHECK(theta.size() == 37);
  // Layer-major, row-major weights, then biases.
  CHECK(theta(0) == f.weights[0](0, 0));
  CHECK(theta(1) == f.weights[0](0, 1));
  CHECK(theta(2) == f.weights[0](1, 0));
  CHECK(theta(10) == f.biases[0](0));
  CHECK(theta(15) == f.weights[1](0, 0));

  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    MlpEnergy g = f;
    const ParameterVector r = testing::uniform_vector(rng, theta.size(), -2, 2);
    unflatten(g, r);
    CHECK((flatten(g).array() == r.array()).all());
  }
  MlpEnergy g = f;
  CHECK_THROWS_AS(unflatten(g, ParameterVector::Zero(3)), std::invalid_argument);

  // Glorot bound for the first layer: sqrt(6 / 7).
  CHECK(f.weights[0].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 7.0));
  CHECK(f.biases[0].norm() == 0.0);
  CHECK((flatten(init_mlp({2, 5, 3, 1}, Activation::tanh, 9)).array() == theta.array()).all());

  MlpEnergy bad = f;
  bad.weights[1](0, 0) = std::nan("");
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(zero_mlp({2, 4, 2}, Activation::swish), std::invalid_argument);
}

TEST_CASE("checkpoint round trip") {
  const MlpEnergy f = init_mlp({2, 7, 7, 1}, Activation::swish, 3);
  const auto path = std::filesystem::temp_directory_path() / "mixfd_test_checkpoint.json";
  save_checkpoint(path, f);
  const MlpEnergy g = load_checkpoint(path);
  std::filesystem::remove(path);
  CHECK(g.layer_dims == f.layer_dims);
  CHECK(g.activation == f.activation);
  CHECK((flatten(g).array() == flatten(f).array()).all());

  auto j = checkpoint_json(f);
  CHECK(j.at("format_version") == kCheckpointVersion);
  j["format_version"] = 99;
  CHECK_THROWS_AS(mlp_from_checkpoint(j), std::invalid_argument);

  CHECK(activation_from_string("tanh") == Activation::tanh);
  CHECK(std::string(to_string(Activation::swish)) == "swish");
  CHECK_THROWS_AS(activation_from_string("relu"), std::invalid_argument);
}
