#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mixfd/dual.hpp"

namespace mixfd {

/// Flat parameter view: layer-major, weights before biases, row-major weights.
using ParameterVector = Eigen::VectorXd;

/// Raised when a loss or intermediate becomes non-finite; `index` names the
/// offending sample (or iteration, for the trainer).
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::size_t index)
      : std::runtime_error(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

/// Scalar energy network f(x): hidden layers use `activation`, the output layer is linear.
struct MlpEnergy {
  std::vector<int> layer_dims;  // {d, hidden..., 1}
  Activation activation = Activation::swish;
  std::vector<Eigen::MatrixXd> weights;  // weights[l] is layer_dims[l+1] x layer_dims[l]
  std::vector<Eigen::VectorXd> biases;

  int input_dim() const { return layer_dims.front(); }
  std::size_t layer_count() const { return weights.size(); }
  std::size_t parameter_count() const;

  /// Throws std::invalid_argument if shapes disagree with layer_dims or a parameter is non-finite.
  void validate() const;
};

/// All parameters zero.
MlpEnergy zero_mlp(std::vector<int> layer_dims, Activation activation);

/// Glorot-uniform weights, zero biases.
MlpEnergy init_mlp(std::vector<int> layer_dims, Activation activation, std::uint64_t seed);

ParameterVector flatten(const MlpEnergy& f);
void unflatten(MlpEnergy& f, const ParameterVector& theta);

double energy(const MlpEnergy& f, const Eigen::VectorXd& x);

/// Energies of every column of `points` (one batched forward pass).
Eigen::VectorXd energy_batch(const MlpEnergy& f, const Eigen::MatrixXd& points);

/// Reverse sweep through the network.
Eigen::VectorXd energy_grad_x(const MlpEnergy& f, const Eigen::VectorXd& x);

/// Exact Laplacian of f: one Dual-number replay of the reverse sweep per input
/// coordinate, reading the diagonal entry of each Hessian column.
double energy_hessian_trace(const MlpEnergy& f, const Eigen::VectorXd& x);

/// Mean over the batch of 1/2 ||grad f||^2 - tr(Hess f).
double sm_loss(const MlpEnergy& f, const Eigen::MatrixXd& batch);

struct LossAndGrad {
  double loss = 0.0;
  ParameterVector grad;
};

/// sm_loss and its exact gradient with respect to every parameter.
LossAndGrad sm_loss_and_grad(const MlpEnergy& f, const Eigen::MatrixXd& batch);

ParameterVector sm_loss_grad_params(const MlpEnergy& f, const Eigen::MatrixXd& batch);

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

// ---- checkpoints ----

inline constexpr int kCheckpointVersion = 1;

nlohmann::json checkpoint_json(const MlpEnergy& f);
MlpEnergy mlp_from_checkpoint(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const MlpEnergy& f);
MlpEnergy load_checkpoint(const std::filesystem::path& path);

}  // namespace mixfd
