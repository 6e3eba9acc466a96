#pragma once

#include <cstdint>
#include <random>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace mixfd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A set of points stored one per column (d x n).
using PointSet = Eigen::MatrixXd;

using Rng = std::mt19937_64;

/// Multivariate normal N(mean, cov).
class GaussianComponent {
 public:
  GaussianComponent(Vector mean, Matrix cov);

  /// Isotropic helper: N(mean, variance * I).
  static GaussianComponent isotropic(Vector mean, double variance);

  int dim() const { return static_cast<int>(mean_.size()); }
  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }

  double log_density(const Vector& x) const;
  Vector score(const Vector& x) const;
  Vector draw(Rng& rng) const;

 private:
  Vector mean_;
  Matrix cov_;
  Eigen::LLT<Matrix> llt_;
  Matrix chol_;  // lower factor
  double log_norm_ = 0.0;
};

/// Planar ring: density proportional to exp(-(r - radius)^2 / (2 radial_std^2)).
/// The log-normalizer is obtained by radial Simpson quadrature at construction.
class RingComponent {
 public:
  RingComponent(double radius, double radial_std);

  int dim() const { return 2; }
  double radius() const { return radius_; }
  double radial_std() const { return radial_std_; }
  double log_normalizer() const { return log_norm_; }

  double log_density(const Vector& x) const;
  Vector score(const Vector& x) const;
  Vector draw(Rng& rng) const;

 private:
  double radius_;
  double radial_std_;
  double log_norm_;
};

/// Axis-aligned Gaussian restricted to the open box (lower, upper).
/// Covariance must be diagonal so the box mass factorizes.
class TruncatedGaussian {
 public:
  TruncatedGaussian(Vector mean, Vector stddev, Vector lower, Vector upper);

  int dim() const { return static_cast<int>(mean_.size()); }
  const Vector& mean() const { return mean_; }
  const Vector& stddev() const { return stddev_; }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }

  bool inside(const Vector& x) const;
  double log_density(const Vector& x) const;
  Vector score(const Vector& x) const;
  Vector draw(Rng& rng) const;

 private:
  Vector mean_;
  Vector stddev_;
  Vector lower_;
  Vector upper_;
  double log_norm_ = 0.0;
};

class AnalyticDensity;

struct MixtureDensity {
  std::vector<AnalyticDensity> components;
  std::vector<double> weights;
};

/// Tagged union over every reference density used by the experiments.
class AnalyticDensity {
 public:
  using Variant =
      std::variant<GaussianComponent, RingComponent, MixtureDensity, TruncatedGaussian>;

  AnalyticDensity(GaussianComponent g) : v_(std::move(g)) {}
  AnalyticDensity(RingComponent r) : v_(std::move(r)) {}
  AnalyticDensity(TruncatedGaussian t) : v_(std::move(t)) {}
  /// Validates weights (positive, summing to 1 within 1e-12) and dimensions.
  AnalyticDensity(MixtureDensity m);

  int dim() const;
  const Variant& variant() const { return v_; }

  template <class T>
  const T* get_if() const { return std::get_if<T>(&v_); }

  double log_density(const Vector& x) const;
  double density(const Vector& x) const;
  Vector score(const Vector& x) const;
  Vector draw(Rng& rng) const;

 private:
  Variant v_;
};

// ---- free-function surface ----

double log_density(const AnalyticDensity& d, const Vector& x);

/// Throws std::domain_error when x is outside (or on the boundary of) the support.
Vector score(const AnalyticDensity& d, const Vector& x);

/// n draws, deterministic in seed.
PointSet sample(const AnalyticDensity& d, std::size_t n, std::uint64_t seed);

/// Draws from an existing generator (for callers that thread their own state).
PointSet sample(const AnalyticDensity& d, std::size_t n, Rng& rng);

AnalyticDensity make_mixture(std::vector<AnalyticDensity> components,
                             std::vector<double> weights);

/// beta * p + (1 - beta) * m.
AnalyticDensity augment(const AnalyticDensity& p, const AnalyticDensity& m, double beta);

/// N(sample mean, centered sample covariance + 1e-6 I).
GaussianComponent moment_match(const PointSet& samples);

/// alpha * g1 + (1 - alpha) * g2; drops a component whose weight is exactly 0.
AnalyticDensity two_component(const AnalyticDensity& g1, const AnalyticDensity& g2,
                              double alpha);

// ---- named targets ----

/// alpha g1 + (1-alpha) g2 with g1 = N(-mu, sigma^2), g2 = N(mu, sigma^2).
AnalyticDensity toy_mixture_1d(double alpha, double mu = 5.0, double sigma = 1.0);

/// 0.1/0.2/0.3/0.4 mixture of unit Gaussians at (-5,-5), (-5,5), (5,5), (5,-5).
AnalyticDensity four_gaussians();

/// Rings of radius 1, 3, 5 (radial std 0.2) weighted 0.1, 0.3, 0.6.
AnalyticDensity concentric_rings();

// ---- serialization ----

nlohmann::json to_json(const AnalyticDensity& d);
AnalyticDensity density_from_json(const nlohmann::json& j);

}  // namespace mixfd
