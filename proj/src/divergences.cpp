#include "mixfd/divergences.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace mixfd {

const char* to_string(Estimator e) {
  switch (e) {
    case Estimator::fd_quadrature: return "fd_quadrature";
    case Estimator::fd_mc: return "fd_mc";
    case Estimator::mfd: return "mfd";
    case Estimator::ksd_vstat: return "ksd_vstat";
    case Estimator::spread_fd: return "spread_fd";
  }
  return "unknown";
}

ScoreFn score_of(const AnalyticDensity& d) {
  return [d](const Vector& x) { return d.score(x); };
}

DivergenceEstimate fd_quadrature(const AnalyticDensity& p, const AnalyticDensity& q,
                                 const QuadratureGrid& grid) {
  if (p.dim() != q.dim()) throw std::invalid_argument("fd_quadrature: p and q differ in dimension");
  if (grid.dim() != p.dim()) throw std::invalid_argument("fd_quadrature: grid dimension mismatch");
  const double value = simpson(
      [&](const Vector& x) {
        const double px = p.density(x);
        if (px < kSupportFloor) return 0.0;
        return 0.5 * px * (p.score(x) - q.score(x)).squaredNorm();
      },
      grid);
  DivergenceEstimate out;
  out.value = value;
  out.estimator = Estimator::fd_quadrature;
  out.size = static_cast<std::size_t>(grid.points_per_axis);
  return out;
}

DivergenceEstimate fd_monte_carlo(const PointSet& samples_from_p, const ScoreFn& score_p,
                                  const ScoreFn& score_q) {
  const auto n = samples_from_p.cols();
  if (n < 1) throw std::invalid_argument("fd_monte_carlo: need at least one sample");
  double sum = 0.0;
  double sum_sq = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector x = samples_from_p.col(i);
    const Vector sp = score_p(x);
    const Vector sq = score_q(x);
    if (!sp.allFinite() || !sq.allFinite()) {
      throw std::domain_error("fd_monte_carlo: non-finite score at sample " + std::to_string(i));
    }
    const double term = 0.5 * (sp - sq).squaredNorm();
    sum += term;
    sum_sq += term * term;
  }
  const double nn = static_cast<double>(n);
  const double mean = sum / nn;
  const double var = n > 1 ? std::max(0.0, (sum_sq - nn * mean * mean) / (nn - 1.0)) : 0.0;
  DivergenceEstimate out;
  out.value = mean;
  out.estimator = Estimator::fd_mc;
  out.std_error = std::sqrt(var / nn);
  out.size = static_cast<std::size_t>(n);
  return out;
}

DivergenceEstimate mfd(const AnalyticDensity& p, const AnalyticDensity& q,
                       const AnalyticDensity& m, double beta, const QuadratureGrid& grid) {
  auto out = fd_quadrature(augment(p, m, beta), augment(q, m, beta), grid);
  out.estimator = Estimator::mfd;
  return out;
}

double median_pairwise_distance(const PointSet& samples) {
  // Pairs are taken among the first 2000 points to bound memory.
  const Eigen::Index n = std::min<Eigen::Index>(samples.cols(), 2000);
  if (n < 2) throw std::invalid_argument("median_pairwise_distance: need at least two samples");
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      dist.push_back((samples.col(i) - samples.col(j)).norm());
    }
  }
  const auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  double med = *mid;
  if (dist.size() % 2 == 0) {
    const double lower = *std::max_element(dist.begin(), mid);
    med = 0.5 * (med + lower);
  }
  return med;
}

KsdResult ksd_vstat(const PointSet& samples_from_p, const ScoreFn& score_p,
                    const ScoreFn& score_q, const KsdKernel& kernel) {
  const auto n = samples_from_p.cols();
  const auto d = samples_from_p.rows();
  if (n < 2) throw std::invalid_argument("ksd_vstat: need at least two samples");

  double h = 0.0;
  if (kernel.bandwidth) {
    h = *kernel.bandwidth;
    if (!(h > 0.0)) throw std::invalid_argument("ksd_vstat: bandwidth must be positive");
  } else {
    h = median_pairwise_distance(samples_from_p);
    if (!(h > 0.0)) {
      throw std::domain_error("ksd_vstat: median pairwise distance is zero (identical samples)");
    }
  }

  Matrix delta(d, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector x = samples_from_p.col(i);
    delta.col(i) = score_p(x) - score_q(x);
    if (!delta.col(i).allFinite()) {
      throw std::domain_error("ksd_vstat: non-finite score at sample " + std::to_string(i));
    }
  }

  const double inv_two_h2 = 1.0 / (2.0 * h * h);
  Vector row_mean = Vector::Zero(n);
  double k_sq = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double row = 0.0;
    double row_k_sq = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double k = std::exp(-(samples_from_p.col(i) - samples_from_p.col(j)).squaredNorm() *
                                inv_two_h2);
      row += delta.col(i).dot(delta.col(j)) * k;
      row_k_sq += k * k;
    }
    row_mean(i) = row / static_cast<double>(n);
    k_sq += row_k_sq;
  }
  const double nn = static_cast<double>(n);
  const double value = row_mean.mean();
  const double spread = (row_mean.array() - value).square().sum() / (nn - 1.0);

  KsdResult out;
  out.estimate.value = value;
  out.estimate.estimator = Estimator::ksd_vstat;
  out.estimate.std_error = 2.0 * std::sqrt(spread / nn);
  out.estimate.size = static_cast<std::size_t>(n);
  out.bandwidth = h;
  out.mean_kernel_sq = k_sq / (nn * nn);
  return out;
}

AnalyticDensity spread(const AnalyticDensity& d, double noise_std) {
  if (!(noise_std > 0.0)) throw std::invalid_argument("spread: noise_std must be positive");
  if (const auto* g = d.get_if<GaussianComponent>()) {
    const auto dim = g->dim();
    return GaussianComponent(g->mean(),
                             g->cov() + noise_std * noise_std * Matrix::Identity(dim, dim));
  }
  if (const auto* m = d.get_if<MixtureDensity>()) {
    std::vector<AnalyticDensity> comps;
    for (const auto& c : m->components) comps.push_back(spread(c, noise_std));
    return make_mixture(std::move(comps), m->weights);
  }
  throw std::invalid_argument(
      "spread_fd: unsupported density (analytic convolution needs Gaussian components)");
}

DivergenceEstimate spread_fd(const AnalyticDensity& p, const AnalyticDensity& q,
                             const SpreadSpec& spec, const QuadratureGrid& grid) {
  auto out = fd_quadrature(spread(p, spec.noise_std), spread(q, spec.noise_std), grid);
  out.estimator = Estimator::spread_fd;
  return out;
}

std::vector<CurvePoint> divergence_curve(double p_weight, const std::vector<double>& alphas,
                                         const CurveConfig& config) {
  const AnalyticDensity p = two_component(config.g1, config.g2, p_weight);
  std::vector<CurvePoint> out;
  out.reserve(alphas.size());
  for (double alpha : alphas) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
      throw std::invalid_argument("divergence_curve: alpha outside [0,1]");
    }
    const AnalyticDensity q = two_component(config.g1, config.g2, alpha);
    double value = 0.0;
    switch (config.estimator) {
      case Estimator::fd_quadrature:
        value = fd_quadrature(p, q, config.grid).value;
        break;
      case Estimator::mfd:
        if (!config.m) throw std::invalid_argument("divergence_curve: mfd needs a mixing density");
        value = mfd(p, q, *config.m, config.beta, config.grid).value;
        break;
      case Estimator::spread_fd:
        value = spread_fd(p, q, SpreadSpec{config.noise_std}, config.grid).value;
        break;
      default:
        throw std::invalid_argument("divergence_curve: only quadrature estimators are supported");
    }
    out.push_back({alpha, value});
  }
  return out;
}

std::vector<double> alpha_grid(double start, double stop, double step) {
  if (!(step > 0.0) || stop < start) throw std::invalid_argument("alpha_grid: bad range");
  std::vector<double> out;
  const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
  for (long i = 0; i < count; ++i) {
    const double a = start + static_cast<double>(i) * step;
    out.push_back(std::round(a * 1e12) / 1e12);
  }
  return out;
}

std::string curve_csv(const std::vector<CurvePoint>& curve, Estimator estimator) {
  std::ostringstream os;
  os << "alpha,value,estimator\n";
  for (const auto& pt : curve) {
    os << std::setprecision(12) << pt.alpha << ',' << std::setprecision(17) << pt.value << ','
       << to_string(estimator) << '\n';
  }
  return os.str();
}

}  // namespace mixfd
