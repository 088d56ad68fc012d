#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "infodesign/random.hpp"

namespace infodesign::models {

struct Interval {
  double lower;
  double upper;

  bool contains(double x) const { return x >= lower && x <= upper; }
};

/// Per-coordinate closed box.
struct Domain {
  std::vector<Interval> bounds;

  std::size_t dim() const { return bounds.size(); }
  bool contains(const Eigen::VectorXd& d) const;
  void validate() const;
  /// Uniform draw inside the box.
  Eigen::VectorXd sample_uniform(Rng& rng) const;
};

/// Base-noise realizations for a block of samples, one row per sample.
///
/// Kept separate from the sampling path so the same draw can be replayed
/// through `simulate` and through the Jacobian. Models that need a single
/// noise source leave `nu` empty.
struct NoiseDraw {
  Eigen::MatrixXd eps;
  Eigen::MatrixXd nu;

  Eigen::Index rows() const { return eps.rows(); }
  NoiseDraw slice(Eigen::Index start, Eigen::Index count) const;
  NoiseDraw row(Eigen::Index i) const { return slice(i, 1); }
};

/// A simulator defined by its sampling path y = h(noise; theta, d).
class SimulatorModel {
 public:
  virtual ~SimulatorModel() = default;

  virtual std::string name() const = 0;
  virtual std::size_t theta_dim() const = 0;
  std::size_t design_dim() const { return domain_.dim(); }
  /// Every catalog model produces one observation per design coordinate.
  virtual std::size_t data_dim() const { return design_dim(); }
  const Domain& domain() const { return domain_; }

  /// True when `jacobian` / `jacobian_transpose_sum` are available.
  virtual bool has_gradients() const = 0;

  virtual Eigen::VectorXd sample_prior(Rng& rng) const = 0;
  /// n prior draws as rows.
  Eigen::MatrixXd sample_prior(Rng& rng, std::size_t n) const;
  virtual double prior_density(const Eigen::VectorXd& theta) const = 0;

  virtual NoiseDraw draw_noise(Rng& rng, std::size_t rows) const = 0;

  /// Row i of the result is h(noise_i; theta_i, d).
  virtual Eigen::MatrixXd simulate(const Eigen::Ref<const Eigen::MatrixXd>& theta, const Eigen::VectorXd& d,
                                   const NoiseDraw& noise) const = 0;
  Eigen::VectorXd simulate_one(const Eigen::VectorXd& theta, const Eigen::VectorXd& d,
                               const NoiseDraw& noise) const;

  /// J_ij = dy_i / dd_j for a single sample (noise must have one row).
  /// Throws CapabilityError when the model withholds gradients.
  virtual Eigen::MatrixXd jacobian(const Eigen::VectorXd& theta, const Eigen::VectorXd& d,
                                   const NoiseDraw& noise) const;

  /// sum_i J(theta_i, d, noise_i)^T v_i over the rows of theta/noise/v.
  /// The default builds every Jacobian; models with structure override it.
  virtual Eigen::VectorXd jacobian_transpose_sum(const Eigen::Ref<const Eigen::MatrixXd>& theta,
                                                 const Eigen::VectorXd& d, const NoiseDraw& noise,
                                                 const Eigen::Ref<const Eigen::MatrixXd>& v) const;

 protected:
  explicit SimulatorModel(Domain domain);
  void check_inputs(const Eigen::Ref<const Eigen::MatrixXd>& theta, const Eigen::VectorXd& d,
                    const NoiseDraw& noise) const;
  [[noreturn]] void throw_no_gradients() const;

 private:
  Domain domain_;
};

/// Diagonal Gaussian prior on (theta0, theta1). A zero std pins that
/// coordinate to its mean.
struct LinearPrior {
  Eigen::Vector2d mean{0.0, 0.0};
  Eigen::Vector2d std{3.0, 3.0};
};

/// y = theta0 + theta1 d + eps + nu with eps ~ N(0, 1) and nu ~ Gamma(shape 2, scale 2).
/// With `gamma_noise` off, nu is absent and the model is fully Gaussian.
class LinearModel final : public SimulatorModel {
 public:
  LinearModel(std::size_t design_dim, bool gamma_noise, LinearPrior prior = {}, double bound = 10.0);

  std::string name() const override { return gamma_noise_ ? "linear" : "gaussian-linear"; }
  std::size_t theta_dim() const override { return 2; }
  bool has_gradients() const override { return true; }
  bool gamma_noise() const { return gamma_noise_; }
  const LinearPrior& prior() const { return prior_; }

  using SimulatorModel::sample_prior;
  Eigen::VectorXd sample_prior(Rng& rng) const override;
  double prior_density(const Eigen::VectorXd& theta) const override;
  NoiseDraw draw_noise(Rng& rng, std::size_t rows) const override;
  Eigen::MatrixXd simulate(const Eigen::Ref<const Eigen::MatrixXd>& theta, const Eigen::VectorXd& d,
                           const NoiseDraw& noise) const override;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& theta, const Eigen::VectorXd& d,
                           const NoiseDraw& noise) const override;
  Eigen::VectorXd jacobian_transpose_sum(const Eigen::Ref<const Eigen::MatrixXd>& theta,
                                         const Eigen::VectorXd& d, const NoiseDraw& noise,
                                         const Eigen::Ref<const Eigen::MatrixXd>& v) const override;

  static constexpr double kGammaShape = 2.0;
  static constexpr double kGammaScale = 2.0;

 private:
  bool gamma_noise_;
  LinearPrior prior_;
};

/// One-compartment pharmacokinetic parameters.
struct PkParams {
  double k_a;  // absorption rate, 1/h
  double k_e;  // elimination rate, 1/h
  double V;    // volume of distribution, L

  static constexpr double kDose = 400.0;

  Eigen::VectorXd as_vector() const { return Eigen::Vector3d{k_a, k_e, V}; }
  static PkParams from_vector(const Eigen::Ref<const Eigen::VectorXd>& v);
  void validate() const;
};

/// Noise-free concentration f(t) = (D/V) k_a/(k_a - k_e) (e^{-k_e t} - e^{-k_a t}).
double pk_mean_concentration(const PkParams& p, double t);
/// df/dt of the noise-free concentration.
double pk_mean_rate(const PkParams& p, double t);

/// y(t) = f(t)(1 + eps) + nu with eps ~ N(0, 0.01^2), nu ~ N(0, 0.1^2), one
/// independent (eps, nu) pair per measurement time. Theta is (k_a, k_e, V)
/// with log-normal prior, rejection-sampled to k_a > k_e.
class PkModel final : public SimulatorModel {
 public:
  explicit PkModel(std::size_t design_dim, double t_max = 24.0);

  std::string name() const override { return "pk"; }
  std::size_t theta_dim() const override { return 3; }
  bool has_gradients() const override { return true; }

  using SimulatorModel::sample_prior;
  Eigen::VectorXd sample_prior(Rng& rng) const override;
  /// Unconstrained prior draw, before the k_a > k_e rejection step.
  static Eigen::Vector3d sample_prior_unconstrained(Rng& rng);
  /// Log-normal density restricted to k_a > k_e (not renormalized).
  double prior_density(const Eigen::VectorXd& theta) const override;
  NoiseDraw draw_noise(Rng& rng, std::size_t rows) const override;
  Eigen::MatrixXd simulate(const Eigen::Ref<const Eigen::MatrixXd>& theta, const Eigen::VectorXd& d,
                           const NoiseDraw& noise) const override;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& theta, const Eigen::VectorXd& d,
                           const NoiseDraw& noise) const override;
  Eigen::VectorXd jacobian_transpose_sum(const Eigen::Ref<const Eigen::MatrixXd>& theta,
                                         const Eigen::VectorXd& d, const NoiseDraw& noise,
                                         const Eigen::Ref<const Eigen::MatrixXd>& v) const override;

  static constexpr double kLatentStd = 0.01;
  static constexpr double kObservationStd = 0.1;
  static constexpr double kLogPriorVar = 0.05;
  static const Eigen::Vector3d& log_prior_mean();
};

/// y = sin(omega t) + 0.1 eps, omega ~ U(0, pi), scalar design t.
class OscillatoryModel final : public SimulatorModel {
 public:
  explicit OscillatoryModel(double t_max = 4.0 * 3.14159265358979323846, bool withhold_gradients = true);

  std::string name() const override { return "oscillatory"; }
  std::size_t theta_dim() const override { return 1; }
  bool has_gradients() const override { return !withhold_gradients_; }

  using SimulatorModel::sample_prior;
  Eigen::VectorXd sample_prior(Rng& rng) const override;
  double prior_density(const Eigen::VectorXd& theta) const override;
  NoiseDraw draw_noise(Rng& rng, std::size_t rows) const override;
  Eigen::MatrixXd simulate(const Eigen::Ref<const Eigen::MatrixXd>& theta, const Eigen::VectorXd& d,
                           const NoiseDraw& noise) const override;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& theta, const Eigen::VectorXd& d,
                           const NoiseDraw& noise) const override;

  static constexpr double kNoiseStd = 0.1;

 private:
  bool withhold_gradients_;
};

/// Gamma draw in the shape/scale convention (mean shape*scale).
double gamma_sample(double shape, double scale, Rng& rng);

// Scalar forms of the sampling paths, usable without a model object.
Eigen::VectorXd linear_sample(const Eigen::Vector2d& theta, const Eigen::VectorXd& d,
                              const NoiseDraw& draw);
Eigen::MatrixXd linear_jacobian(const Eigen::Vector2d& theta, const Eigen::VectorXd& d);
Eigen::VectorXd gaussian_linear_sample(const Eigen::Vector2d& theta, const Eigen::VectorXd& d,
                                       const NoiseDraw& draw);
Eigen::MatrixXd gaussian_linear_jacobian(const Eigen::Vector2d& theta, const Eigen::VectorXd& d);
Eigen::VectorXd pk_sample(const PkParams& theta, const Eigen::VectorXd& t, const NoiseDraw& draw);
Eigen::MatrixXd pk_jacobian(const PkParams& theta, const Eigen::VectorXd& t, const NoiseDraw& draw);
PkParams pk_prior_sample(Rng& rng);
double oscillatory_sample(double omega, double t, const NoiseDraw& draw);

}  // namespace infodesign::models
