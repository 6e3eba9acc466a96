#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "mixfd/ebm.hpp"
#include "mixfd/mixtures.hpp"

namespace mixfd {

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(Eigen::Index dim = 0)
      : m(Eigen::VectorXd::Zero(dim)), v(Eigen::VectorXd::Zero(dim)) {}
};

/// Bias-corrected Adam update of `params` in place.
void adam_step(AdamState& state, ParameterVector& params, const ParameterVector& grad, double lr);

enum class TrainMethod { fd, mfd, fd_annealed };

const char* to_string(TrainMethod m);
TrainMethod train_method_from_string(const std::string& name);

struct TrainConfig {
  TrainMethod method = TrainMethod::fd;
  double beta = 0.8;  // mfd
  std::size_t iterations = 10000;
  std::size_t batch_size = 300;
  double learning_rate = 3e-4;
  std::uint64_t seed = 0;
  double anneal_start_std = 3.0;  // fd_annealed
  double anneal_decay = 0.9999;   // fd_annealed

  void validate() const;
};

/// One minibatch. Without a mixing density, `batch` draws uniformly with
/// replacement from `data`; with one, each slot takes a data point with
/// probability beta and otherwise a fresh draw from `m`.
/// Deterministic in (seed, iteration).
Eigen::MatrixXd sample_training_batch(const PointSet& data, const AnalyticDensity* m,
                                      std::optional<double> beta, std::size_t batch,
                                      std::uint64_t seed, std::uint64_t iteration);

struct TraceRow {
  std::size_t iteration = 0;
  double loss = 0.0;  // mean batch loss over the preceding 100 iterations
  std::optional<double> noise_std;
};

struct TrainResult {
  MlpEnergy model;
  std::vector<TraceRow> trace;
};

/// Called after each completed iteration (1-based count) with the current model
/// and the data-noise std used for that iteration (0 unless annealing).
using TrainObserver = std::function<void(std::size_t, const MlpEnergy&, double)>;

TrainResult train(const PointSet& data, const TrainConfig& config, MlpEnergy model,
                  const AnalyticDensity* m = nullptr, const TrainObserver& observer = {});

/// CSV with header `iteration,loss,noise_std`.
std::string trace_csv(const std::vector<TraceRow>& trace);

}  // namespace mixfd
