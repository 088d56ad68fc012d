#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "infodesign/models.hpp"
#include "infodesign/nn.hpp"
#include "infodesign/trainer.hpp"

namespace infodesign::bo {

/// Matern-5/2 hyperparameters with one lengthscale shared by all dimensions.
struct KernelHyper {
  double signal_var = 1.0;
  double lengthscale = 1.0;
};

/// sigma^2 (1 + sqrt5 r/l + 5 r^2/(3 l^2)) exp(-sqrt5 r/l), r = |x1 - x2|.
double matern52(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2, const KernelHyper& hyper);

struct GpFitConfig {
  std::size_t restarts = 8;
  double noise_floor = 1e-6;
  std::uint64_t seed = 0;
};

/// GP regression with a constant mean (the mean of the observations).
struct GaussianProcess {
  Eigen::MatrixXd X;  // rows are inputs
  Eigen::VectorXd f;
  KernelHyper hyper;
  double noise_var = 1e-6;
  double mean = 0.0;
  double jitter = 0.0;  // extra diagonal added to make the factorization succeed
  double log_marginal_likelihood = 0.0;
  Eigen::LLT<Eigen::MatrixXd> chol;
  Eigen::VectorXd alpha;  // (K + noise I)^{-1} (f - mean)
};

/// Fits signal variance, lengthscale and noise variance by maximizing the log
/// marginal likelihood (coordinate-wise Brent search in log space from several
/// starts). Noise variance is kept >= cfg.noise_floor.
GaussianProcess gp_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& f, const GpFitConfig& cfg = {});

/// Builds the factorization for fixed hyperparameters.
GaussianProcess gp_condition(const Eigen::MatrixXd& X, const Eigen::VectorXd& f, const KernelHyper& hyper,
                             double noise_var);

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;  // latent function, noise excluded
};

Prediction gp_predict(const GaussianProcess& gp, const Eigen::VectorXd& x);

/// Expected improvement for maximization; 0 when sigma is 0.
double expected_improvement(double mu, double sigma, double best);
double expected_improvement(const GaussianProcess& gp, const Eigen::VectorXd& x, double best);

struct BoConfig {
  std::size_t initial_probe_count = 5;
  std::size_t budget = 25;
  std::size_t acquisition_restarts = 32;
  nn::NetworkConfig network;
  trainer::TrainConfig train;
  std::size_t validation_sets = 3;
  std::size_t validation_size = 30000;
  std::uint64_t seed = 0;
  GpFitConfig gp;

  void validate() const;
};

struct Probe {
  Eigen::VectorXd design;
  bool ok = false;
  double objective = 0.0;
  std::string error;
  bool initial = false;  // space-filling phase rather than EI
};

struct BoResult {
  Eigen::VectorXd design;
  double objective = 0.0;
  std::vector<Probe> probes;
  /// Training runs of successful probes, in probe order (model overload only).
  std::vector<trainer::TrainResult> trainings;
  std::optional<GaussianProcess> gp;
  /// Best objective after each probe.
  std::vector<double> incumbent;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Per-design objective used by the model overload: a fresh critic trained
/// at fixed d, scored by the mean validation bound.
double probe_objective(const models::SimulatorModel& model, const BoConfig& cfg, const Eigen::VectorXd& d,
                       std::uint64_t probe_seed, trainer::TrainResult* training = nullptr);

/// Latin-hypercube probes, then EI maxima, maximizing `objective` over the
/// domain. Failed evaluations (exceptions) are recorded and skipped.
BoResult bo_optimize(const Objective& objective, const models::Domain& domain, const BoConfig& cfg);
BoResult bo_optimize(const models::SimulatorModel& model, const BoConfig& cfg);

/// n points, one per stratum in every dimension.
Eigen::MatrixXd latin_hypercube(const models::Domain& domain, std::size_t n, Rng& rng);

}  // namespace infodesign::bo
