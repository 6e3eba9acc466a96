#pragma once

#include <functional>

#include <Eigen/Dense>

namespace mixfd {

/// Tensor-product Simpson grid over the box [lower, upper] (1D or 2D).
struct QuadratureGrid {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  int points_per_axis = 401;

  /// Throws std::invalid_argument unless lower < upper and points_per_axis is odd and >= 3.
  void validate() const;

  int dim() const { return static_cast<int>(lower.size()); }
  double step(int axis) const {
    return (upper(axis) - lower(axis)) / static_cast<double>(points_per_axis - 1);
  }
  double node(int axis, int i) const { return lower(axis) + step(axis) * i; }

  static QuadratureGrid box1d(double lo, double hi, int points);
  static QuadratureGrid box2d(double lo, double hi, int points);
  static QuadratureGrid box2d(double xlo, double xhi, double ylo, double yhi, int points);

  /// [-10, 10]^d with 401 points per axis.
  static QuadratureGrid standard(int dim);
};

/// Composite Simpson weights 1,4,2,...,4,1 scaled by h/3.
Eigen::VectorXd simpson_weights(int points, double step);

double simpson_1d(const std::function<double(double)>& f, const QuadratureGrid& grid);

double simpson_2d(const std::function<double(double, double)>& f, const QuadratureGrid& grid);

/// Dispatches on grid.dim(); f receives each node as a vector.
double simpson(const std::function<double(const Eigen::VectorXd&)>& f,
               const QuadratureGrid& grid);

struct LogNormalizer {
  double log_z = 0.0;
  double linear() const;
};

/// log of the integral of exp(-energy) over the grid box, max-shifted.
LogNormalizer estimate_normalizer(const std::function<double(const Eigen::VectorXd&)>& energy,
                                  const QuadratureGrid& grid);

}  // namespace mixfd
