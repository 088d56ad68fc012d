#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "infodesign/nn.hpp"
#include "infodesign/random.hpp"

namespace infodesign::posterior {

using PriorDensity = std::function<double(const Eigen::VectorXd&)>;

/// e^{T(theta, y*) - 1} p(theta). Only a density when the bound is tight.
double posterior_density(const nn::Network& net, const Eigen::VectorXd& theta, const Eigen::VectorXd& y_star,
                         const PriorDensity& prior_density);

/// Critic values T(theta_i, y*) for every row of `thetas`.
Eigen::VectorXd critic_values(const nn::Network& net, const Eigen::MatrixXd& thetas, const Eigen::VectorXd& y_star);

/// Prior draws re-weighted by the trained critic at one observation.
///
/// The prior factor is already carried by the draws, so the weights use
/// e^{T} only.
struct PosteriorEstimate {
  Eigen::VectorXd y_star;
  Eigen::MatrixXd prior_samples;
  Eigen::VectorXd critic;       // T(theta_i, y*)
  Eigen::VectorXd raw_weights;  // e^{T - 1}; may overflow to inf for very large T
  Eigen::VectorXd weights;      // normalized, sum to 1
  double ess = 0.0;             // 1 / sum w_i^2

  /// Fewer than 1% of the draws carry the weight.
  bool degenerate() const { return ess < 0.01 * static_cast<double>(weights.size()); }

  /// e^{T - 1} p(theta) as written.
  double raw_density(const nn::Network& net, const Eigen::VectorXd& theta, const PriorDensity& prior) const;
  /// The raw density divided by the mean raw weight over the prior draws.
  double normalized_density(const nn::Network& net, const Eigen::VectorXd& theta, const PriorDensity& prior) const;
};

/// Throws DegeneracyError when any critic value is NaN or no weight survives.
PosteriorEstimate estimate_posterior(const nn::Network& net, const Eigen::MatrixXd& prior_samples,
                                     const Eigen::VectorXd& y_star);

/// n rows drawn with replacement from the prior draws, probability proportional to e^{T}.
Eigen::MatrixXd posterior_sample(const PosteriorEstimate& est, std::size_t n, Rng& rng);
Eigen::MatrixXd posterior_sample(const nn::Network& net, const Eigen::MatrixXd& prior_samples,
                                 const Eigen::VectorXd& y_star, std::size_t n, Rng& rng);

struct DimensionSummary {
  double mean = 0.0;
  double std = 0.0;
  double lower = 0.0;  // 16th percentile
  double upper = 0.0;  // 84th percentile
};

/// Per-column mean, sample std and central 68% interval. Needs >= 2 rows.
std::vector<DimensionSummary> summarize(const Eigen::MatrixXd& samples);

/// Linear-interpolation quantile of an ascending-sorted sequence, p in [0, 1].
double sorted_quantile(const std::vector<double>& sorted, double p);

}  // namespace infodesign::posterior
