#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixfd/ebm.hpp"
#include "mixfd/mixtures.hpp"
#include "mixfd/quadrature.hpp"
#include "mixfd/trainer.hpp"

namespace mixfd {

enum class ExperimentKind { blindness_demo, mfd_demo, train_2d, anneal_demo };

const char* to_string(ExperimentKind k);
ExperimentKind experiment_from_string(const std::string& name);

/// Training scale: `desk` is the CI-sized run, `paper` the full-size network.
enum class Profile { desk, paper };

Profile profile_from_string(const std::string& name);

/// Raised for malformed configs (unknown target, missing or ill-typed keys).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::blindness_demo;
  Profile profile = Profile::desk;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";

  // Blindness / MFD demos: the two-component family alpha_p g1 + (1 - alpha_p) g2
  // with g1 = N(-mu, sigma^2), g2 = N(mu, sigma^2).
  double mu = 5.0;
  double sigma = 1.0;
  double alpha_p = 0.2;
  double alpha_q = 0.8;
  double alpha_start = 0.01;
  double alpha_stop = 0.99;
  double alpha_step = 0.01;
  double demo_beta = 0.5;
  std::optional<AnalyticDensity> mixing;  // mfd-demo; N(0, 9) when absent

  // Training runs.
  std::string target_name;
  std::optional<AnalyticDensity> target;
  TrainConfig train;
  std::vector<int> hidden;
  Activation activation = Activation::swish;
  std::size_t data_size = 100000;
  std::size_t kl_samples = 10000;
  std::size_t export_points = 201;
  std::size_t snapshot_every = 1000;
  std::vector<TrainMethod> compare;  // anneal-demo: extra methods on the same data
  QuadratureGrid grid;

  /// The fully resolved config, as written into summary.json.
  nlohmann::json resolved;
};

/// Builds a config from JSON, filling unspecified keys from the profile's
/// defaults for the experiment. Throws ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentKind kind, Profile profile);

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentKind kind, Profile profile);

struct ExperimentResult {
  nlohmann::json summary;
  /// Names of failed self-checks (normalization, finiteness, etc.).
  std::vector<std::string> failed_checks;
  bool ok() const { return failed_checks.empty(); }
};

/// Runs the experiment, writing every artifact plus summary.json into output_dir.
ExperimentResult run_experiment(const ExperimentConfig& config);

ExperimentResult run_blindness_demo(const ExperimentConfig& config);
ExperimentResult run_mfd_demo(const ExperimentConfig& config);
ExperimentResult run_train_2d(const ExperimentConfig& config);
ExperimentResult run_anneal_demo(const ExperimentConfig& config);

/// 64-bit FNV-1a of a string.
std::uint64_t fnv1a(const std::string& text);

/// Independent seed for a named sub-stream (data, KL draws, init) of a run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace mixfd
