#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "infodesign/estimator.hpp"
#include "infodesign/models.hpp"
#include "infodesign/nn.hpp"

namespace infodesign::trainer {

struct TrainConfig {
  std::size_t epochs = 0;
  std::size_t batch_size = 30000;
  nn::LrSchedule lr_psi{1e-4, 1.0, 5000};
  nn::LrSchedule lr_design{1e-2, 1.0, 5000};
  std::uint64_t seed = 0;
  /// Starting design; drawn uniformly from the domain when empty.
  std::optional<Eigen::VectorXd> design_init;
  std::size_t moving_average_window = 100;

  void validate() const;
};

struct TraceRecord {
  std::size_t epoch = 0;
  double mi_raw = 0.0;
  double mi_smoothed = 0.0;
  double standard_error = 0.0;
  /// Design after this epoch's update.
  Eigen::VectorXd design;
};

struct TrainResult {
  Eigen::VectorXd design;
  nn::Network network;
  std::vector<TraceRecord> trace;
  std::size_t clamp_warnings = 0;
  std::size_t ignored_design_updates = 0;
};

using EpochCallback = std::function<void(const TraceRecord&)>;

/// Joint gradient ascent over critic parameters and design. Each epoch draws a
/// fresh batch at the current design, takes one Adam step on the critic and
/// one on the design (separate Adam states), then applies the domain rule.
/// Requires a model with sampling-path gradients.
TrainResult train_joint(const models::SimulatorModel& model, const nn::NetworkConfig& netcfg,
                        const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Critic-only training at a fixed design; works for any model.
TrainResult train_at_design(const models::SimulatorModel& model, const nn::NetworkConfig& netcfg,
                            const TrainConfig& cfg, const Eigen::VectorXd& design,
                            const EpochCallback& on_epoch = {});

/// Coordinates whose proposed value leaves the domain keep their previous
/// value; the rest take the proposal. Returns the number of ignored coordinates
/// through `ignored` when non-null.
Eigen::VectorXd apply_domain_rule(const Eigen::VectorXd& previous, const Eigen::VectorXd& proposed,
                                  const models::Domain& domain, std::size_t* ignored = nullptr);

struct ValidationScore {
  double mean = 0.0;
  /// Sample standard deviation across sets; 0 when only one set was drawn.
  double std = 0.0;
  bool single_set = false;
};

ValidationScore validation_score(const nn::Network& net, const models::SimulatorModel& model,
                                 const Eigen::VectorXd& d, std::size_t n_sets, std::size_t set_size,
                                 Rng& rng);

struct GridCandidate {
  nn::NetworkConfig network;
  TrainConfig train;
  std::string label;
};

struct GridEntry {
  std::size_t candidate = 0;  // index into the candidate list
  std::string label;
  bool ok = false;
  std::string error;
  ValidationScore score;
  Eigen::VectorXd design;
};

struct ValidationSettings {
  std::size_t n_sets = 10;
  std::size_t set_size = 30000;
};

/// Trains every candidate (joint training when the model has gradients,
/// otherwise at its design_init), scores it on fresh validation sets seeded
/// from the candidate's own seed, and ranks by descending mean. Failed
/// candidates are kept, marked !ok, and sorted last.
std::vector<GridEntry> grid_search(const std::vector<GridCandidate>& candidates,
                                   const models::SimulatorModel& model, const ValidationSettings& validation);

/// Stream id used to seed validation sets from a training seed.
inline constexpr std::uint64_t kValidationStream = 0x76616c6964ULL;

}  // namespace infodesign::trainer
