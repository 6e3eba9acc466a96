#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mixfd/mixtures.hpp"
#include "mixfd/quadrature.hpp"

namespace mixfd {

enum class Estimator { fd_quadrature, fd_mc, mfd, ksd_vstat, spread_fd };

const char* to_string(Estimator e);

struct DivergenceEstimate {
  double value = 0.0;
  Estimator estimator = Estimator::fd_quadrature;
  /// Monte-Carlo standard error; 0 for quadrature estimators.
  double std_error = 0.0;
  /// Quadrature resolution, or sample count for Monte-Carlo estimators.
  std::size_t size = 0;
  std::optional<std::uint64_t> seed;
};

using ScoreFn = std::function<Vector(const Vector&)>;

ScoreFn score_of(const AnalyticDensity& d);

/// Integrand contributions are skipped where p(x) is below this floor.
inline constexpr double kSupportFloor = 1e-300;

/// 1/2 * integral of p ||s_p - s_q||^2 by Simpson's rule.
DivergenceEstimate fd_quadrature(const AnalyticDensity& p, const AnalyticDensity& q,
                                 const QuadratureGrid& grid);

/// Sample mean of 1/2 ||s_p(x_i) - s_q(x_i)||^2 over samples drawn from p.
DivergenceEstimate fd_monte_carlo(const PointSet& samples_from_p, const ScoreFn& score_p,
                                  const ScoreFn& score_q);

/// FD between the beta-augmented pair beta p + (1-beta) m and beta q + (1-beta) m.
DivergenceEstimate mfd(const AnalyticDensity& p, const AnalyticDensity& q,
                       const AnalyticDensity& m, double beta, const QuadratureGrid& grid);

struct KsdKernel {
  /// RBF k(x, y) = exp(-||x - y||^2 / (2 h^2)); nullopt selects the median heuristic.
  std::optional<double> bandwidth;
};

struct KsdResult {
  DivergenceEstimate estimate;
  double bandwidth = 0.0;
  /// V-statistic of k(x, x')^2 over the same sample pairs.
  double mean_kernel_sq = 0.0;
};

/// V-statistic of (s_p - s_q)(x)^T k(x, x') (s_p - s_q)(x') over all ordered pairs.
KsdResult ksd_vstat(const PointSet& samples_from_p, const ScoreFn& score_p,
                    const ScoreFn& score_q, const KsdKernel& kernel = {});

/// Median of the pairwise Euclidean distances (i < j).
double median_pairwise_distance(const PointSet& samples);

struct SpreadSpec {
  double noise_std = 1.0;
};

/// Replaces every Gaussian component N(mu, S) by N(mu, S + sigma^2 I).
/// Throws std::invalid_argument for non-Gaussian components.
AnalyticDensity spread(const AnalyticDensity& d, double noise_std);

DivergenceEstimate spread_fd(const AnalyticDensity& p, const AnalyticDensity& q,
                             const SpreadSpec& spec, const QuadratureGrid& grid);

// ---- alpha sweeps over the two-component family alpha g1 + (1 - alpha) g2 ----

struct CurveConfig {
  AnalyticDensity g1;
  AnalyticDensity g2;
  Estimator estimator = Estimator::fd_quadrature;
  QuadratureGrid grid;
  std::optional<AnalyticDensity> m;    // mfd
  double beta = 0.5;                   // mfd
  double noise_std = 1.0;              // spread_fd
};

struct CurvePoint {
  double alpha = 0.0;
  double value = 0.0;
};

std::vector<CurvePoint> divergence_curve(double p_weight, const std::vector<double>& alphas,
                                         const CurveConfig& config);

/// {start, start + step, ..., stop}, computed as start + i * step and rounded to 1e-12.
std::vector<double> alpha_grid(double start, double stop, double step);

/// CSV with header `alpha,value,estimator`.
std::string curve_csv(const std::vector<CurvePoint>& curve, Estimator estimator);

}  // namespace mixfd
