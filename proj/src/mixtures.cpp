#include "mixfd/mixtures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "mixfd/quadrature.hpp"

namespace mixfd {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_dim(const Vector& x, int d, const char* who) {
  if (x.size() != d) {
    throw std::invalid_argument(std::string(who) + ": point has dimension " +
                                std::to_string(x.size()) + ", density has " +
                                std::to_string(d));
  }
}

// log(Phi(b) - Phi(a)) for standardized bounds a < b.
double log_normal_box_mass(double a, double b) {
  // Evaluate the difference on the side of the smaller tail to keep precision.
  double mass;
  if (a >= 0.0) {
    mass = 0.5 * (std::erfc(a / std::numbers::sqrt2) - std::erfc(b / std::numbers::sqrt2));
  } else if (b <= 0.0) {
    mass = 0.5 * (std::erfc(-b / std::numbers::sqrt2) - std::erfc(-a / std::numbers::sqrt2));
  } else {
    mass = 1.0 - 0.5 * std::erfc(-a / std::numbers::sqrt2) -
           0.5 * std::erfc(b / std::numbers::sqrt2);
  }
  return std::log(mass);
}

}  // namespace

// ---------------------------------------------------------------------------
// GaussianComponent

GaussianComponent::GaussianComponent(Vector mean, Matrix cov)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
  const auto d = mean_.size();
  if (d < 1) throw std::invalid_argument("GaussianComponent: dimension must be >= 1");
  if (cov_.rows() != d || cov_.cols() != d) {
    throw std::invalid_argument("GaussianComponent: covariance shape does not match mean");
  }
  if (!cov_.isApprox(cov_.transpose(), 1e-12)) {
    throw std::invalid_argument("GaussianComponent: covariance is not symmetric");
  }
  llt_.compute(cov_);
  if (llt_.info() != Eigen::Success) {
    throw std::invalid_argument("GaussianComponent: covariance is not positive definite");
  }
  chol_ = llt_.matrixL();
  const double log_det = 2.0 * chol_.diagonal().array().log().sum();
  log_norm_ = -0.5 * (static_cast<double>(d) * kLog2Pi + log_det);
}

GaussianComponent GaussianComponent::isotropic(Vector mean, double variance) {
  const auto d = mean.size();
  return GaussianComponent(std::move(mean), variance * Matrix::Identity(d, d));
}

double GaussianComponent::log_density(const Vector& x) const {
  check_dim(x, dim(), "log_density");
  const Vector z = chol_.triangularView<Eigen::Lower>().solve(x - mean_);
  return log_norm_ - 0.5 * z.squaredNorm();
}

Vector GaussianComponent::score(const Vector& x) const {
  check_dim(x, dim(), "score");
  return -llt_.solve(x - mean_);
}

Vector GaussianComponent::draw(Rng& rng) const {
  std::normal_distribution<double> normal;
  Vector z(dim());
  for (int i = 0; i < dim(); ++i) z(i) = normal(rng);
  return mean_ + chol_ * z;
}

// ---------------------------------------------------------------------------
// RingComponent

RingComponent::RingComponent(double radius, double radial_std)
    : radius_(radius), radial_std_(radial_std) {
  if (!(radius > 0.0) || !(radial_std > 0.0)) {
    throw std::invalid_argument("RingComponent: radius and radial_std must be positive");
  }
  const double s2 = radial_std * radial_std;
  const auto grid = QuadratureGrid::box1d(0.0, radius + 8.0 * radial_std, 4001);
  const double radial = simpson_1d(
      [&](double r) { return r * std::exp(-(r - radius) * (r - radius) / (2.0 * s2)); },
      grid);
  log_norm_ = std::log(2.0 * std::numbers::pi * radial);
}

double RingComponent::log_density(const Vector& x) const {
  check_dim(x, 2, "log_density");
  const double dr = x.norm() - radius_;
  return -dr * dr / (2.0 * radial_std_ * radial_std_) - log_norm_;
}

Vector RingComponent::score(const Vector& x) const {
  check_dim(x, 2, "score");
  const double r = x.norm();
  // The radial profile has a cone point at the origin; the symmetric limit is 0.
  if (r == 0.0) return Vector::Zero(2);
  const double dr = r - radius_;
  return (-dr / (radial_std_ * radial_std_)) * (x / r);
}

Vector RingComponent::draw(Rng& rng) const {
  // The radial marginal is proportional to r * N(r; radius, std^2) on r > 0.
  // Rejection from the envelope (radius + std |u|) phi(u), u = (r - radius)/std,
  // which is a mixture of a standard normal and a signed Rayleigh variate.
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double normal_weight = radius_;
  const double rayleigh_weight = radial_std_ * std::sqrt(2.0 / std::numbers::pi);
  const double p_normal = normal_weight / (normal_weight + rayleigh_weight);
  double r = 0.0;
  for (;;) {
    double u;
    if (unif(rng) < p_normal) {
      u = normal(rng);
    } else {
      const double mag = std::sqrt(-2.0 * std::log1p(-unif(rng)));
      u = unif(rng) < 0.5 ? -mag : mag;
    }
    r = radius_ + radial_std_ * u;
    if (r <= 0.0) continue;
    if (unif(rng) * (radius_ + radial_std_ * std::abs(u)) <= r) break;
  }
  const double theta = 2.0 * std::numbers::pi * unif(rng);
  Vector x(2);
  x << r * std::cos(theta), r * std::sin(theta);
  return x;
}

// ---------------------------------------------------------------------------
// TruncatedGaussian

TruncatedGaussian::TruncatedGaussian(Vector mean, Vector stddev, Vector lower, Vector upper)
    : mean_(std::move(mean)),
      stddev_(std::move(stddev)),
      lower_(std::move(lower)),
      upper_(std::move(upper)) {
  const auto d = mean_.size();
  if (d < 1 || stddev_.size() != d || lower_.size() != d || upper_.size() != d) {
    throw std::invalid_argument("TruncatedGaussian: inconsistent dimensions");
  }
  log_norm_ = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(stddev_(i) > 0.0)) throw std::invalid_argument("TruncatedGaussian: stddev must be > 0");
    if (!(lower_(i) < upper_(i))) {
      throw std::invalid_argument("TruncatedGaussian: lower must be < upper");
    }
    const double a = (lower_(i) - mean_(i)) / stddev_(i);
    const double b = (upper_(i) - mean_(i)) / stddev_(i);
    const double log_mass = log_normal_box_mass(a, b);
    if (!(log_mass > std::log(1e-3))) {
      throw std::invalid_argument("TruncatedGaussian: box holds too little mass to sample");
    }
    log_norm_ += 0.5 * kLog2Pi + std::log(stddev_(i)) + log_mass;
  }
}

bool TruncatedGaussian::inside(const Vector& x) const {
  return (x.array() > lower_.array()).all() && (x.array() < upper_.array()).all();
}

double TruncatedGaussian::log_density(const Vector& x) const {
  check_dim(x, dim(), "log_density");
  if (!inside(x)) return kNegInf;
  const Vector z = (x - mean_).cwiseQuotient(stddev_);
  return -0.5 * z.squaredNorm() - log_norm_;
}

Vector TruncatedGaussian::score(const Vector& x) const {
  check_dim(x, dim(), "score");
  if (!inside(x)) throw std::domain_error("score: point is outside the truncated support");
  return -(x - mean_).cwiseQuotient(stddev_.cwiseProduct(stddev_));
}

Vector TruncatedGaussian::draw(Rng& rng) const {
  std::normal_distribution<double> normal;
  Vector x(dim());
  for (int i = 0; i < dim(); ++i) {
    double v;
    do {
      v = mean_(i) + stddev_(i) * normal(rng);
    } while (!(v > lower_(i) && v < upper_(i)));
    x(i) = v;
  }
  return x;
}

// ---------------------------------------------------------------------------
// AnalyticDensity

namespace {

MixtureDensity validated(MixtureDensity m) {
  if (m.components.empty()) throw std::invalid_argument("mixture: needs at least one component");
  if (m.components.size() != m.weights.size()) {
    throw std::invalid_argument("mixture: component and weight counts differ");
  }
  double total = 0.0;
  for (double w : m.weights) {
    if (!(w > 0.0)) throw std::invalid_argument("mixture: weights must be strictly positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument("mixture: weights must sum to 1");
  }
  const int d = m.components.front().dim();
  for (const auto& c : m.components) {
    if (c.dim() != d) throw std::invalid_argument("mixture: components differ in dimension");
  }
  return m;
}

}  // namespace

AnalyticDensity::AnalyticDensity(MixtureDensity m) : v_(validated(std::move(m))) {}

int AnalyticDensity::dim() const {
  return std::visit(
      [](const auto& c) -> int {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, MixtureDensity>) {
          return c.components.front().dim();
        } else {
          return c.dim();
        }
      },
      v_);
}

double AnalyticDensity::log_density(const Vector& x) const {
  return std::visit(
      [&](const auto& c) -> double {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, MixtureDensity>) {
          check_dim(x, dim(), "log_density");
          const std::size_t k = c.components.size();
          std::vector<double> terms(k);
          double max_term = kNegInf;
          for (std::size_t i = 0; i < k; ++i) {
            terms[i] = std::log(c.weights[i]) + c.components[i].log_density(x);
            max_term = std::max(max_term, terms[i]);
          }
          if (max_term == kNegInf) return kNegInf;
          double acc = 0.0;
          for (double t : terms) acc += std::exp(t - max_term);
          return max_term + std::log(acc);
        } else {
          return c.log_density(x);
        }
      },
      v_);
}

double AnalyticDensity::density(const Vector& x) const { return std::exp(log_density(x)); }

Vector AnalyticDensity::score(const Vector& x) const {
  return std::visit(
      [&](const auto& c) -> Vector {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, MixtureDensity>) {
          check_dim(x, dim(), "score");
          const std::size_t k = c.components.size();
          std::vector<double> terms(k);
          double max_term = kNegInf;
          for (std::size_t i = 0; i < k; ++i) {
            terms[i] = std::log(c.weights[i]) + c.components[i].log_density(x);
            max_term = std::max(max_term, terms[i]);
          }
          if (max_term == kNegInf) {
            throw std::domain_error("score: point is outside the mixture support");
          }
          double norm = 0.0;
          Vector acc = Vector::Zero(dim());
          for (std::size_t i = 0; i < k; ++i) {
            if (terms[i] == kNegInf) continue;
            const double w = std::exp(terms[i] - max_term);
            norm += w;
            acc += w * c.components[i].score(x);
          }
          return acc / norm;
        } else {
          return c.score(x);
        }
      },
      v_);
}

Vector AnalyticDensity::draw(Rng& rng) const {
  return std::visit(
      [&](const auto& c) -> Vector {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, MixtureDensity>) {
          std::discrete_distribution<std::size_t> pick(c.weights.begin(), c.weights.end());
          return c.components[pick(rng)].draw(rng);
        } else {
          return c.draw(rng);
        }
      },
      v_);
}

// ---------------------------------------------------------------------------
// free functions

double log_density(const AnalyticDensity& d, const Vector& x) { return d.log_density(x); }

Vector score(const AnalyticDensity& d, const Vector& x) { return d.score(x); }

PointSet sample(const AnalyticDensity& d, std::size_t n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  PointSet out(d.dim(), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) out.col(static_cast<Eigen::Index>(i)) = d.draw(rng);
  return out;
}

PointSet sample(const AnalyticDensity& d, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return sample(d, n, rng);
}

AnalyticDensity make_mixture(std::vector<AnalyticDensity> components,
                             std::vector<double> weights) {
  return AnalyticDensity(MixtureDensity{std::move(components), std::move(weights)});
}

AnalyticDensity augment(const AnalyticDensity& p, const AnalyticDensity& m, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("augment: beta must lie in (0,1)");
  if (p.dim() != m.dim()) throw std::invalid_argument("augment: dimension mismatch");
  return make_mixture({p, m}, {beta, 1.0 - beta});
}

GaussianComponent moment_match(const PointSet& samples) {
  const auto d = samples.rows();
  const auto n = samples.cols();
  if (d < 1) throw std::invalid_argument("moment_match: empty dimension");
  if (n < d + 1) throw std::invalid_argument("moment_match: need at least d+1 samples");
  const Vector mean = samples.rowwise().mean();
  const Matrix centered = samples.colwise() - mean;
  Matrix cov = (centered * centered.transpose()) / static_cast<double>(n);
  cov = 0.5 * (cov + cov.transpose());

  const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov, Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, cov.trace());
  if (!(eig.eigenvalues().minCoeff() > 1e-12 * scale)) {
    throw std::invalid_argument("moment_match: sample covariance is singular");
  }
  cov.diagonal().array() += 1e-6;
  return GaussianComponent(mean, cov);
}

AnalyticDensity two_component(const AnalyticDensity& g1, const AnalyticDensity& g2,
                              double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("two_component: weight must lie in [0,1]");
  }
  if (alpha == 0.0) return g2;
  if (alpha == 1.0) return g1;
  return make_mixture({g1, g2}, {alpha, 1.0 - alpha});
}

AnalyticDensity toy_mixture_1d(double alpha, double mu, double sigma) {
  const auto g1 = GaussianComponent::isotropic(Vector::Constant(1, -mu), sigma * sigma);
  const auto g2 = GaussianComponent::isotropic(Vector::Constant(1, mu), sigma * sigma);
  return two_component(g1, g2, alpha);
}

AnalyticDensity four_gaussians() {
  const double centers[4][2] = {{-5, -5}, {-5, 5}, {5, 5}, {5, -5}};
  std::vector<AnalyticDensity> comps;
  for (const auto& c : centers) {
    Vector mean(2);
    mean << c[0], c[1];
    comps.emplace_back(GaussianComponent::isotropic(mean, 1.0));
  }
  return make_mixture(std::move(comps), {0.1, 0.2, 0.3, 0.4});
}

AnalyticDensity concentric_rings() {
  return make_mixture({RingComponent(1.0, 0.2), RingComponent(3.0, 0.2), RingComponent(5.0, 0.2)},
                      {0.1, 0.3, 0.6});
}

// ---------------------------------------------------------------------------
// serialization

namespace {

nlohmann::json vec_json(const Vector& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

nlohmann::json mat_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(row);
  }
  return rows;
}

Vector json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Matrix json_mat(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const auto n = static_cast<Eigen::Index>(rows.size());
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != n) {
      throw std::invalid_argument("density spec: covariance must be square");
    }
    for (Eigen::Index k = 0; k < n; ++k) {
      m(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
  }
  return m;
}

}  // namespace

nlohmann::json to_json(const AnalyticDensity& d) {
  return std::visit(
      [](const auto& c) -> nlohmann::json {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, GaussianComponent>) {
          return {{"kind", "gaussian"}, {"mean", vec_json(c.mean())}, {"cov", mat_json(c.cov())}};
        } else if constexpr (std::is_same_v<T, RingComponent>) {
          return {{"kind", "ring"}, {"radius", c.radius()}, {"radial_std", c.radial_std()}};
        } else if constexpr (std::is_same_v<T, TruncatedGaussian>) {
          const Vector var = c.stddev().cwiseProduct(c.stddev());
          nlohmann::json bounds = nlohmann::json::array();
          for (int i = 0; i < c.dim(); ++i) bounds.push_back({c.lower()(i), c.upper()(i)});
          return {{"kind", "truncated_gaussian"},
                  {"mean", vec_json(c.mean())},
                  {"cov", mat_json(var.asDiagonal().toDenseMatrix())},
                  {"bounds", bounds}};
        } else {
          nlohmann::json comps = nlohmann::json::array();
          for (const auto& sub : c.components) comps.push_back(to_json(sub));
          return {{"kind", "mixture"}, {"weights", c.weights}, {"components", comps}};
        }
      },
      d.variant());
}

AnalyticDensity density_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "gaussian") {
    return GaussianComponent(json_vec(j.at("mean")), json_mat(j.at("cov")));
  }
  if (kind == "ring") {
    return RingComponent(j.at("radius").get<double>(), j.at("radial_std").get<double>());
  }
  if (kind == "truncated_gaussian") {
    const Vector mean = json_vec(j.at("mean"));
    const Matrix cov = json_mat(j.at("cov"));
    if (!cov.isDiagonal(0.0)) {
      throw std::invalid_argument("density spec: truncated_gaussian needs a diagonal cov");
    }
    const auto bounds = j.at("bounds").get<std::vector<std::array<double, 2>>>();
    if (static_cast<Eigen::Index>(bounds.size()) != mean.size()) {
      throw std::invalid_argument("density spec: one [lower, upper] pair per axis required");
    }
    Vector lo(mean.size()), hi(mean.size());
    for (Eigen::Index i = 0; i < mean.size(); ++i) {
      lo(i) = bounds[static_cast<std::size_t>(i)][0];
      hi(i) = bounds[static_cast<std::size_t>(i)][1];
    }
    return TruncatedGaussian(mean, cov.diagonal().cwiseSqrt(), lo, hi);
  }
  if (kind == "mixture") {
    std::vector<AnalyticDensity> comps;
    for (const auto& c : j.at("components")) comps.push_back(density_from_json(c));
    return make_mixture(std::move(comps), j.at("weights").get<std::vector<double>>());
  }
  throw std::invalid_argument("density spec: unknown kind '" + kind + "'");
}

}  // namespace mixfd
