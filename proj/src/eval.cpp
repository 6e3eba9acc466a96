#include "mixfd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace mixfd {

double NormalizedModel::density(const Vector& x) const { return std::exp(log_density(x)); }

NormalizedModel normalize_model(MlpEnergy energy, const QuadratureGrid& grid,
                                MethodMetadata method) {
  energy.validate();
  if (energy.input_dim() != grid.dim()) {
    throw std::invalid_argument("normalize_model: grid dimension does not match the model");
  }
  const auto log_z =
      estimate_normalizer([&](const Vector& x) { return mixfd::energy(energy, x); }, grid);
  NormalizedModel model{std::move(energy), log_z.log_z, std::move(method)};
  const double mass = simpson([&](const Vector& x) { return model.density(x); }, grid);
  if (!(std::abs(mass - 1.0) <= 1e-4)) {
    throw std::runtime_error("normalize_model: normalized mass is " + std::to_string(mass));
  }
  return model;
}

CorrectedDensity CorrectedDensity::from_model(const NormalizedModel& model, double clamp_floor) {
  if (model.method.method != TrainMethod::mfd || !model.method.beta || !model.method.m) {
    throw std::invalid_argument("CorrectedDensity: model was not trained with mfd");
  }
  return CorrectedDensity{[model](const Vector& x) { return model.log_density(x); },
                          *model.method.beta, *model.method.m, clamp_floor};
}

double CorrectedDensity::raw(const Vector& x) const {
  return (std::exp(base_log_density(x)) - (1.0 - beta) * m.density(x)) / beta;
}

double CorrectedDensity::operator()(const Vector& x) const {
  return std::max(clamp_floor, raw(x));
}

double CorrectedDensity::log_density(const Vector& x) const { return std::log((*this)(x)); }

double corrected_density(const CorrectedDensity& c, const Vector& x) { return c(x); }

CorrectionDiagnostics correction_diagnostics(const CorrectedDensity& c,
                                             const QuadratureGrid& grid) {
  std::size_t clamped = 0;
  std::size_t nodes = 0;
  CorrectionDiagnostics out;
  out.negative_mass = simpson(
      [&](const Vector& x) {
        const double r = c.raw(x);
        ++nodes;
        if (r <= c.clamp_floor) ++clamped;
        return std::min(r, 0.0);
      },
      grid);
  out.clamped_fraction = static_cast<double>(clamped) / static_cast<double>(nodes);
  return out;
}

KlEstimate kl_monte_carlo(const AnalyticDensity& p_true, const DensityFn& model_log_density,
                          std::size_t k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("kl_monte_carlo: k must be >= 1");
  const PointSet xs = sample(p_true, k, seed);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (Eigen::Index i = 0; i < xs.cols(); ++i) {
    const Vector x = xs.col(i);
    const double term = p_true.log_density(x) - model_log_density(x);
    if (!std::isfinite(term)) {
      throw NumericalError("kl_monte_carlo: non-finite term at draw " + std::to_string(i),
                           static_cast<std::size_t>(i));
    }
    sum += term;
    sum_sq += term * term;
  }
  const double n = static_cast<double>(k);
  const double mean = sum / n;
  const double var = k > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) : 0.0;
  return KlEstimate{mean, std::sqrt(var / n), k, seed};
}

double mode_mass(const DensityFn& density, const Eigen::VectorXd& region_lower,
                 const Eigen::VectorXd& region_upper, const QuadratureGrid& grid) {
  grid.validate();
  if (region_lower.size() != grid.dim() || region_upper.size() != grid.dim()) {
    throw std::invalid_argument("mode_mass: region dimension does not match the grid");
  }
  if (((region_lower.array() < grid.lower.array() - 1e-12) ||
       (region_upper.array() > grid.upper.array() + 1e-12) ||
       (region_upper.array() < region_lower.array()))
          .any()) {
    throw std::invalid_argument("mode_mass: region must be a box inside the grid");
  }
  if ((region_upper.array() == region_lower.array()).any()) return 0.0;

  int points = 3;
  for (int a = 0; a < grid.dim(); ++a) {
    const double panels = std::ceil((region_upper(a) - region_lower(a)) / grid.step(a) - 1e-9);
    int n = static_cast<int>(panels) + 1;
    if (n % 2 == 0) ++n;
    points = std::max(points, n);
  }
  return simpson(density, QuadratureGrid{region_lower, region_upper, points});
}

std::vector<GridRow> density_grid_export(const DensityFn& density, const QuadratureGrid& grid) {
  grid.validate();
  std::vector<GridRow> rows;
  const int n = grid.points_per_axis;
  Vector x(grid.dim());
  for (int i = 0; i < n; ++i) {
    x(0) = grid.node(0, i);
    if (grid.dim() == 1) {
      rows.push_back({x(0), std::nullopt, density(x)});
      continue;
    }
    for (int j = 0; j < n; ++j) {
      x(1) = grid.node(1, j);
      rows.push_back({x(0), x(1), density(x)});
    }
  }
  return rows;
}

std::string density_grid_csv(const std::vector<GridRow>& rows) {
  std::ostringstream os;
  const bool two_d = !rows.empty() && rows.front().y.has_value();
  os << (two_d ? "x,y,density\n" : "x,density\n");
  for (const auto& r : rows) {
    os << std::setprecision(12) << r.x << ',';
    if (two_d) os << *r.y << ',';
    os << std::setprecision(17) << r.value << '\n';
  }
  return os.str();
}

}  // namespace mixfd
