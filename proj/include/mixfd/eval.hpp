#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mixfd/ebm.hpp"
#include "mixfd/mixtures.hpp"
#include "mixfd/quadrature.hpp"
#include "mixfd/trainer.hpp"

namespace mixfd {

using DensityFn = std::function<double(const Vector&)>;

/// Training provenance recorded with a normalized model.
struct MethodMetadata {
  TrainMethod method = TrainMethod::fd;
  std::optional<double> beta;           // mfd
  std::optional<AnalyticDensity> m;     // mfd
};

/// exp(-f(x) - log_z), with log_z estimated by Simpson's rule on a grid.
struct NormalizedModel {
  MlpEnergy energy;
  double log_z = 0.0;
  MethodMetadata method;

  double log_density(const Vector& x) const { return -mixfd::energy(energy, x) - log_z; }
  double density(const Vector& x) const;
};

/// Estimates log Z on `grid` and checks that the normalized density has unit
/// mass there within 1e-4 (throws std::runtime_error otherwise).
NormalizedModel normalize_model(MlpEnergy energy, const QuadratureGrid& grid,
                                MethodMetadata method = {});

/// Removes the mixing component from a model of the augmented density:
/// (model(x) - (1 - beta) m(x)) / beta, clamped below at clamp_floor.
struct CorrectedDensity {
  DensityFn base_log_density;
  double beta = 0.8;
  AnalyticDensity m;
  double clamp_floor = 1e-30;

  static CorrectedDensity from_model(const NormalizedModel& model, double clamp_floor = 1e-30);

  /// Unclamped value; may be negative where the model undershoots (1-beta) m.
  double raw(const Vector& x) const;
  double operator()(const Vector& x) const;
  double log_density(const Vector& x) const;
};

double corrected_density(const CorrectedDensity& c, const Vector& x);

struct CorrectionDiagnostics {
  double negative_mass = 0.0;  // integral of min(raw, 0), <= 0
  double clamped_fraction = 0.0;  // fraction of grid nodes hitting the floor
};

CorrectionDiagnostics correction_diagnostics(const CorrectedDensity& c,
                                             const QuadratureGrid& grid);

struct KlEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t k = 0;
  std::uint64_t seed = 0;
};

/// Mean of log p_true(x) - model_log_density(x) over k fresh draws from p_true.
KlEstimate kl_monte_carlo(const AnalyticDensity& p_true, const DensityFn& model_log_density,
                          std::size_t k, std::uint64_t seed);

/// Simpson integral of `density` over `region` (a box inside `grid`), using
/// nodes no coarser than the grid spacing. A zero-width region yields 0.
double mode_mass(const DensityFn& density, const Eigen::VectorXd& region_lower,
                 const Eigen::VectorXd& region_upper, const QuadratureGrid& grid);

struct GridRow {
  double x = 0.0;
  std::optional<double> y;
  double value = 0.0;
};

/// Density on every grid node; x-major order (x outer, y inner).
std::vector<GridRow> density_grid_export(const DensityFn& density, const QuadratureGrid& grid);

/// CSV with header `x,y,density`, or `x,density` for 1D grids.
std::string density_grid_csv(const std::vector<GridRow>& rows);

}  // namespace mixfd
