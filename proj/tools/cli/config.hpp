#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "infodesign/bo.hpp"
#include "infodesign/errors.hpp"
#include "infodesign/models.hpp"
#include "infodesign/nn.hpp"
#include "infodesign/reference.hpp"
#include "infodesign/trainer.hpp"

namespace infodesign::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUnknownModel = 2,
  kMalformedConfig = 3,
  kMissingSnapshot = 4,
};

struct UnknownModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MalformedConfigError : ConfigError {
  using ConfigError::ConfigError;
};
struct MissingSnapshotError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raw `key = value` pairs in file order. '#' starts a comment.
using RawConfig = std::vector<std::pair<std::string, std::string>>;

RawConfig parse_config_text(const std::string& text);
RawConfig read_config_file(const std::string& path);

/// Alternatives for a grid search: every combination becomes one candidate.
struct GridSpec {
  std::vector<std::vector<std::size_t>> hidden;
  std::vector<double> lr_psi;
  std::vector<double> lr_design;
  std::vector<std::size_t> batch_size;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;

  std::string model;
  std::size_t design_dim = 1;
  std::optional<double> bound;  // linear models: symmetric box [-bound, bound]
  std::optional<double> t_max;  // pk, oscillatory: [0, t_max]
  bool gradients = false;       // oscillatory only
  std::optional<Eigen::Vector2d> prior_mean;
  std::optional<Eigen::Vector2d> prior_std;

  std::vector<std::size_t> hidden{100};
  std::optional<std::uint64_t> network_seed;

  trainer::TrainConfig train;

  std::size_t bo_initial = 5;
  std::size_t bo_budget = 25;
  std::size_t bo_restarts = 32;
  std::size_t bo_validation_sets = 3;
  std::size_t bo_validation_size = 30000;
  std::size_t bo_gp_restarts = 8;
  double bo_noise_floor = 1e-6;

  std::size_t reference_n = 5000;
  std::size_t reference_m = 500;
  std::size_t reference_kde_samples = 50000;
  std::optional<Eigen::VectorXd> reference_design;

  std::size_t validate_sets = 10;
  std::size_t validate_size = 30000;

  std::optional<Eigen::VectorXd> theta_true;
  std::optional<Eigen::VectorXd> y_star;
  std::size_t posterior_prior_samples = 100000;
  std::size_t posterior_samples = 10000;

  GridSpec grid;

  /// Every key that has an effective value, in schema order. Written back as
  /// `key = value` lines it rebuilds the same config.
  std::vector<std::pair<std::string, std::string>> resolved() const;
};

/// Builds a config from parsed pairs. Unknown or repeated keys and values
/// that do not parse throw MalformedConfigError; a missing or unrecognized
/// model name throws UnknownModelError.
ExperimentConfig build_config(const RawConfig& raw);

/// Schema keys with a one-line description each.
const std::vector<std::pair<std::string, std::string>>& config_schema();

std::unique_ptr<models::SimulatorModel> make_model(const ExperimentConfig& cfg);
nn::NetworkConfig network_config(const ExperimentConfig& cfg, const models::SimulatorModel& model);
bo::BoConfig bo_config(const ExperimentConfig& cfg, const models::SimulatorModel& model);
std::vector<trainer::GridCandidate> grid_candidates(const ExperimentConfig& cfg, const models::SimulatorModel& model);

/// Stream ids for the command-level random draws.
inline constexpr std::uint64_t kNetworkSeedStream = 11;
inline constexpr std::uint64_t kPriorDrawStream = 21;
inline constexpr std::uint64_t kObservationStream = 22;
inline constexpr std::uint64_t kResampleStream = 23;
inline constexpr std::uint64_t kKdeStream = 31;
inline constexpr std::uint64_t kValidateStream = 41;

}  // namespace infodesign::cli
