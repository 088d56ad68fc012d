#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "infodesign/models.hpp"
#include "infodesign/nn.hpp"
#include "infodesign/random.hpp"

namespace infodesign::estimator {

/// Paired joint samples (theta_i, y_i) and marginal samples (theta_i, y'_i).
///
/// y_i = h(noise_i; theta_i, d) and y'_i = h(noise'_i; theta'_i, d) with theta'
/// an independent prior batch. The draws are retained so the design gradient
/// can replay them through the Jacobian.
struct Batch {
  Eigen::VectorXd design;
  Eigen::MatrixXd theta;
  Eigen::MatrixXd y;
  models::NoiseDraw noise;
  Eigen::MatrixXd theta_marginal;
  Eigen::MatrixXd y_marginal;
  models::NoiseDraw noise_marginal;

  Eigen::Index size() const { return theta.rows(); }
};

/// Draws theta, then noise, then theta', then noise' from `rng`, in that order.
Batch make_batch(const models::SimulatorModel& model, const Eigen::VectorXd& d, std::size_t n, Rng& rng);

/// Re-simulates y and y' at a new design, keeping thetas and noise (common random numbers).
Batch rebatch_at(const models::SimulatorModel& model, const Batch& batch, const Eigen::VectorXd& d);

struct MiEstimate {
  double value = 0.0;           // joint_term - e^{-1} marginal_term, nats
  double joint_term = 0.0;      // mean of T over joint rows
  double marginal_term = 0.0;   // mean of e^T over marginal rows
  double standard_error = 0.0;  // Monte-Carlo std of `value`
};

/// Upper limit on T inside the exponential.
inline constexpr double kExpClamp = 30.0;

/// Single pass over a batch: the bound and, on request, its gradients.
struct BoundEvaluation {
  MiEstimate estimate;
  Eigen::VectorXd grad_psi;     // empty unless requested
  Eigen::VectorXd grad_design;  // empty unless requested
  std::size_t clamped = 0;      // marginal rows with T > kExpClamp
  double max_marginal_t = 0.0;
};

struct EvaluationRequest {
  bool grad_psi = false;
  /// Needs a model with gradients; pass it in `model`.
  bool grad_design = false;
  const models::SimulatorModel* model = nullptr;
};

BoundEvaluation evaluate_bound(const nn::Network& net, const Batch& batch, const EvaluationRequest& req = {});

MiEstimate mi_lower_bound(const nn::Network& net, const Batch& batch);
Eigen::VectorXd grad_psi(const nn::Network& net, const Batch& batch);
/// Throws CapabilityError when the model has no Jacobian.
Eigen::VectorXd grad_design(const nn::Network& net, const Batch& batch, const models::SimulatorModel& model);

/// Trailing mean over min(window, i + 1) entries.
std::vector<double> moving_average(const std::vector<double>& trace, std::size_t window);

}  // namespace infodesign::estimator
