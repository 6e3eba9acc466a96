#include "mixfd/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mixfd {

namespace {

constexpr std::size_t kTraceEvery = 100;

Rng iteration_rng(std::uint64_t seed, std::uint64_t iteration, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(iteration),
                    static_cast<std::uint32_t>(iteration >> 32), stream};
  return Rng(seq);
}

}  // namespace

const char* to_string(TrainMethod m) {
  switch (m) {
    case TrainMethod::fd: return "fd";
    case TrainMethod::mfd: return "mfd";
    case TrainMethod::fd_annealed: return "fd_annealed";
  }
  return "unknown";
}

TrainMethod train_method_from_string(const std::string& name) {
  if (name == "fd") return TrainMethod::fd;
  if (name == "mfd") return TrainMethod::mfd;
  if (name == "fd_annealed") return TrainMethod::fd_annealed;
  throw std::invalid_argument("unknown training method '" + name + "'");
}

void TrainConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("TrainConfig: iterations must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
  if (method == TrainMethod::mfd && !(beta > 0.0 && beta < 1.0)) {
    throw std::invalid_argument("TrainConfig: beta must lie in (0,1)");
  }
  if (method == TrainMethod::fd_annealed) {
    if (!(anneal_start_std > 0.0)) {
      throw std::invalid_argument("TrainConfig: anneal_start_std must be > 0");
    }
    if (!(anneal_decay > 0.0 && anneal_decay < 1.0)) {
      throw std::invalid_argument("TrainConfig: anneal_decay must lie in (0,1)");
    }
  }
}

Eigen::MatrixXd sample_training_batch(const PointSet& data, const AnalyticDensity* m,
                                      std::optional<double> beta, std::size_t batch,
                                      std::uint64_t seed, std::uint64_t iteration) {
  if (data.cols() < 1) throw std::invalid_argument("sample_training_batch: empty dataset");
  if (m && !beta) throw std::invalid_argument("sample_training_batch: mixing needs beta");
  if (m && m->dim() != data.rows()) {
    throw std::invalid_argument("sample_training_batch: mixing density dimension mismatch");
  }
  Rng rng = iteration_rng(seed, iteration, 0);
  std::uniform_int_distribution<Eigen::Index> pick(0, data.cols() - 1);
  std::bernoulli_distribution from_data(beta.value_or(1.0));

  Eigen::MatrixXd out(data.rows(), static_cast<Eigen::Index>(batch));
  for (Eigen::Index s = 0; s < out.cols(); ++s) {
    if (!m || from_data(rng)) {
      out.col(s) = data.col(pick(rng));
    } else {
      out.col(s) = m->draw(rng);
    }
  }
  return out;
}

TrainResult train(const PointSet& data, const TrainConfig& config, MlpEnergy model,
                  const AnalyticDensity* m, const TrainObserver& observer) {
  config.validate();
  model.validate();
  if (data.rows() != model.input_dim()) {
    throw std::invalid_argument("train: data dimension does not match the model input");
  }
  const bool mixing = config.method == TrainMethod::mfd;
  if (mixing && !m) throw std::invalid_argument("train: mfd requires a mixing density");
  const bool annealed = config.method == TrainMethod::fd_annealed;

  ParameterVector theta = flatten(model);
  AdamState adam(theta.size());
  double noise_std = annealed ? config.anneal_start_std : 0.0;

  TrainResult result;
  double window = 0.0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    Eigen::MatrixXd batch =
        sample_training_batch(data, mixing ? m : nullptr,
                              mixing ? std::optional<double>(config.beta) : std::nullopt,
                              config.batch_size, config.seed, it);
    const double used_std = noise_std;
    if (annealed) {
      Rng rng = iteration_rng(config.seed, it, 1);
      std::normal_distribution<double> normal(0.0, noise_std);
      for (Eigen::Index k = 0; k < batch.size(); ++k) batch.data()[k] += normal(rng);
      noise_std *= config.anneal_decay;
    }

    LossAndGrad lg;
    try {
      lg = sm_loss_and_grad(model, batch);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string("train: diverged at iteration ") + std::to_string(it) +
                               " (" + e.what() + ")",
                           it);
    }
    if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) {
      throw NumericalError("train: diverged at iteration " + std::to_string(it), it);
    }
    adam_step(adam, theta, lg.grad, config.learning_rate);
    unflatten(model, theta);

    window += lg.loss;
    const std::size_t done = it + 1;
    if (done % kTraceEvery == 0) {
      TraceRow row;
      row.iteration = done;
      row.loss = window / static_cast<double>(kTraceEvery);
      if (annealed) row.noise_std = used_std;
      result.trace.push_back(row);
      window = 0.0;
    }
    if (observer) observer(done, model, used_std);
  }
  result.model = std::move(model);
  return result;
}

std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream os;
  os << std::setprecision(17) << "iteration,loss,noise_std\n";
  for (const auto& row : trace) {
    os << row.iteration << ',' << row.loss << ',';
    if (row.noise_std) os << *row.noise_std;
    os << '\n';
  }
  return os.str();
}

}  // namespace mixfd
