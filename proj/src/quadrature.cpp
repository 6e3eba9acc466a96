#include "mixfd/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace mixfd {

namespace {

[[noreturn]] void non_finite_node(const Eigen::VectorXd& x, double value) {
  std::ostringstream os;
  os << "simpson: integrand is " << value << " at node (";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x(i);
  os << ")";
  throw std::domain_error(os.str());
}

}  // namespace

void QuadratureGrid::validate() const {
  if (lower.size() < 1 || lower.size() > 2 || lower.size() != upper.size()) {
    throw std::invalid_argument("QuadratureGrid: only 1D and 2D boxes are supported");
  }
  if (!(lower.array() < upper.array()).all()) {
    throw std::invalid_argument("QuadratureGrid: lower must be < upper on every axis");
  }
  if (points_per_axis < 3 || points_per_axis % 2 == 0) {
    throw std::invalid_argument("QuadratureGrid: points_per_axis must be odd and >= 3");
  }
}

QuadratureGrid QuadratureGrid::box1d(double lo, double hi, int points) {
  QuadratureGrid g{Eigen::VectorXd::Constant(1, lo), Eigen::VectorXd::Constant(1, hi), points};
  g.validate();
  return g;
}

QuadratureGrid QuadratureGrid::box2d(double lo, double hi, int points) {
  return box2d(lo, hi, lo, hi, points);
}

QuadratureGrid QuadratureGrid::box2d(double xlo, double xhi, double ylo, double yhi,
                                     int points) {
  QuadratureGrid g{Eigen::Vector2d(xlo, ylo), Eigen::Vector2d(xhi, yhi), points};
  g.validate();
  return g;
}

QuadratureGrid QuadratureGrid::standard(int dim) {
  return dim == 1 ? box1d(-10.0, 10.0, 401) : box2d(-10.0, 10.0, 401);
}

Eigen::VectorXd simpson_weights(int points, double step) {
  Eigen::VectorXd w(points);
  for (int i = 0; i < points; ++i) {
    w(i) = (i == 0 || i == points - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
  }
  return w * (step / 3.0);
}

double simpson_1d(const std::function<double(double)>& f, const QuadratureGrid& grid) {
  grid.validate();
  if (grid.dim() != 1) throw std::invalid_argument("simpson_1d: grid must be 1D");
  const int n = grid.points_per_axis;
  const Eigen::VectorXd w = simpson_weights(n, grid.step(0));
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = grid.node(0, i);
    const double v = f(x);
    if (!std::isfinite(v)) non_finite_node(Eigen::VectorXd::Constant(1, x), v);
    acc += w(i) * v;
  }
  return acc;
}

double simpson_2d(const std::function<double(double, double)>& f, const QuadratureGrid& grid) {
  grid.validate();
  if (grid.dim() != 2) throw std::invalid_argument("simpson_2d: grid must be 2D");
  const int n = grid.points_per_axis;
  const Eigen::VectorXd wx = simpson_weights(n, grid.step(0));
  const Eigen::VectorXd wy = simpson_weights(n, grid.step(1));
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = grid.node(0, i);
    double row = 0.0;
    for (int j = 0; j < n; ++j) {
      const double y = grid.node(1, j);
      const double v = f(x, y);
      if (!std::isfinite(v)) non_finite_node(Eigen::Vector2d(x, y), v);
      row += wy(j) * v;
    }
    acc += wx(i) * row;
  }
  return acc;
}

double simpson(const std::function<double(const Eigen::VectorXd&)>& f,
               const QuadratureGrid& grid) {
  grid.validate();
  if (grid.dim() == 1) {
    Eigen::VectorXd x(1);
    return simpson_1d(
        [&](double t) {
          x(0) = t;
          return f(x);
        },
        grid);
  }
  Eigen::VectorXd x(2);
  return simpson_2d(
      [&](double a, double b) {
        x << a, b;
        return f(x);
      },
      grid);
}

double LogNormalizer::linear() const { return std::exp(log_z); }

LogNormalizer estimate_normalizer(const std::function<double(const Eigen::VectorXd&)>& energy,
                                  const QuadratureGrid& grid) {
  grid.validate();
  // Two passes: tabulate energies to find the minimum, then integrate the shifted exponent.
  std::vector<double> values;
  double min_energy = std::numeric_limits<double>::infinity();
  simpson(
      [&](const Eigen::VectorXd& x) {
        const double e = energy(x);
        if (!std::isfinite(e)) non_finite_node(x, e);
        values.push_back(e);
        min_energy = std::min(min_energy, e);
        return 0.0;
      },
      grid);
  std::size_t k = 0;
  const double shifted = simpson(
      [&](const Eigen::VectorXd&) { return std::exp(-(values[k++] - min_energy)); }, grid);
  return LogNormalizer{-min_energy + std::log(shifted)};
}

}  // namespace mixfd
