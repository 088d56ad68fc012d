#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "infodesign/models.hpp"

namespace infodesign::reference {

struct NestedMcConfig {
  std::size_t N = 5000;  // outer samples
  std::size_t M = 500;   // inner samples, shared by every outer index
  std::uint64_t seed = 0;

  void validate() const;
};

/// log p(y_j | d_j, theta) for one measurement.
using CoordinateLogLikelihood = std::function<double(double y_j, double d_j, const Eigen::VectorXd& theta)>;

struct NestedMcResult {
  double value = 0.0;
  /// Standard error across outer samples (inner-sample bias not included).
  double standard_error = 0.0;
};

/// Nested Monte-Carlo mutual information:
///   (1/N) sum_i [ log p(y_i | theta_i) - log (1/M) sum_s p(y_i | theta_s) ]
/// with per-coordinate log-likelihoods summed and the inner mean done by
/// log-sum-exp. Outer pairs come from the model's prior and sampling path.
NestedMcResult nested_mc_mi(const CoordinateLogLikelihood& log_lik, const models::SimulatorModel& model,
                            const Eigen::VectorXd& d, const NestedMcConfig& cfg);

/// Gaussian-kernel mixture on scalar samples.
///
/// Evaluation through operator() and log_pdf uses a log-density table on a
/// fine grid (linear interpolation) and falls back to the exact mixture
/// outside it; kde_eval always uses the exact mixture.
class KdeDensity {
 public:
  KdeDensity(std::vector<double> samples, double bandwidth);

  const std::vector<double>& samples() const { return samples_; }
  double bandwidth() const { return bandwidth_; }

  double operator()(double x) const;
  double log_pdf(double x) const;
  double exact_log_pdf(double x) const;

 private:
  std::vector<double> samples_;
  double bandwidth_;
  double grid_lo_ = 0.0, grid_step_ = 1.0;
  std::vector<double> log_table_;
};

enum class BandwidthRule { silverman };

/// Bandwidths below this are raised to it (degenerate or single samples).
inline constexpr double kBandwidthFloor = 1e-3;

/// 0.9 min(sd, IQR/1.34) n^{-1/5}.
double silverman_bandwidth(const std::vector<double>& samples);

KdeDensity kde_fit(std::vector<double> samples, BandwidthRule rule = BandwidthRule::silverman);
double kde_eval(const KdeDensity& k, double x);

/// Noise density of the Gamma+Gaussian linear model: a KDE on n draws of eps + nu.
KdeDensity linear_noise_kde(std::size_t n, Rng& rng);

/// p_noise(y_j - theta0 - theta1 d_j).
double linear_likelihood(double y_j, double d_j, const Eigen::Vector2d& theta, const KdeDensity& noise_kde);
double linear_likelihood(double y_j, double d_j, const Eigen::Vector2d& theta,
                         const std::function<double(double)>& noise_pdf);

/// N(y_j; f, f^2 0.01^2 + 0.1^2) with f the noise-free concentration at t_j.
double pk_likelihood(double y_j, double t_j, const models::PkParams& theta);
double pk_log_likelihood(double y_j, double t_j, const models::PkParams& theta);

/// 0.5 ln det(I + X Sigma X^T / noise_var), X rows [1, d_i].
double analytic_mi_gaussian_linear(const Eigen::VectorXd& d, const Eigen::Matrix2d& prior_cov, double noise_var);

/// Per-coordinate log-likelihood for a catalog model. The Gamma+Gaussian
/// linear model gets a KDE noise density fitted on `kde_samples` draws.
CoordinateLogLikelihood likelihood_for(const models::SimulatorModel& model, std::uint64_t seed,
                                       std::size_t kde_samples = 50000);

}  // namespace infodesign::reference
