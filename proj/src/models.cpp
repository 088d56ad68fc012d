#include "infodesign/models.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "infodesign/errors.hpp"

namespace infodesign::models {

bool Domain::contains(const Eigen::VectorXd& d) const {
  if (static_cast<std::size_t>(d.size()) != bounds.size()) return false;
  for (std::size_t i = 0; i < bounds.size(); ++i)
    if (!bounds[i].contains(d[static_cast<Eigen::Index>(i)])) return false;
  return true;
}

void Domain::validate() const {
  if (bounds.empty()) throw ConfigError("domain: design dimension must be >= 1");
  for (const auto& b : bounds)
    if (!std::isfinite(b.lower) || !std::isfinite(b.upper) || !(b.lower < b.upper))
      throw ConfigError("domain: bounds must be finite with lower < upper");
}

Eigen::VectorXd Domain::sample_uniform(Rng& rng) const {
  Eigen::VectorXd d(static_cast<Eigen::Index>(bounds.size()));
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    std::uniform_real_distribution<double> u(bounds[i].lower, bounds[i].upper);
    d[static_cast<Eigen::Index>(i)] = u(rng);
  }
  return d;
}

NoiseDraw NoiseDraw::slice(Eigen::Index start, Eigen::Index count) const {
  NoiseDraw out;
  out.eps = eps.middleRows(start, count);
  if (nu.size() > 0) out.nu = nu.middleRows(start, count);
  return out;
}

SimulatorModel::SimulatorModel(Domain domain) : domain_(std::move(domain)) { domain_.validate(); }

Eigen::MatrixXd SimulatorModel::sample_prior(Rng& rng, std::size_t n) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(theta_dim()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) = sample_prior(rng).transpose();
  return out;
}

Eigen::VectorXd SimulatorModel::simulate_one(const Eigen::VectorXd& theta, const Eigen::VectorXd& d,
                                             const NoiseDraw& noise) const {
  return simulate(theta.transpose(), d, noise).row(0).transpose();
}

void SimulatorModel::check_inputs(const Eigen::Ref<const Eigen::MatrixXd>& theta,
                                  const Eigen::VectorXd& d, const NoiseDraw& noise) const {
  if (static_cast<std::size_t>(theta.cols()) != theta_dim()) {
    std::ostringstream os;
    os << name() << ": theta has " << theta.cols() << " columns, expected " << theta_dim();
    throw InputError(os.str());
  }
  if (static_cast<std::size_t>(d.size()) != design_dim()) {
    std::ostringstream os;
    os << name() << ": design has " << d.size() << " entries, expected " << design_dim();
    throw InputError(os.str());
  }
  if (noise.eps.rows() != theta.rows() || static_cast<std::size_t>(noise.eps.cols()) != data_dim())
    throw InputError(name() + ": noise block does not match theta rows / data dimension");
}

void SimulatorModel::throw_no_gradients() const {
  throw CapabilityError(name() +
                        ": sampling-path Jacobian is not available; optimize the design with the "
                        "Bayesian-optimization path instead");
}

Eigen::MatrixXd SimulatorModel::jacobian(const Eigen::VectorXd&, const Eigen::VectorXd&,
                                         const NoiseDraw&) const {
  throw_no_gradients();
}

Eigen::VectorXd SimulatorModel::jacobian_transpose_sum(const Eigen::Ref<const Eigen::MatrixXd>& theta,
                                                       const Eigen::VectorXd& d, const NoiseDraw& noise,
                                                       const Eigen::Ref<const Eigen::MatrixXd>& v) const {
  if (!has_gradients()) throw_no_gradients();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(d.size());
  for (Eigen::Index i = 0; i < theta.rows(); ++i)
    acc.noalias() += jacobian(theta.row(i).transpose(), d, noise.row(i)).transpose() * v.row(i).transpose();
  return acc;
}

// ---------------------------------------------------------------- gamma

double gamma_sample(double shape, double scale, Rng& rng) {
  if (!(shape > 0.0) || !(scale > 0.0) || !std::isfinite(shape) || !std::isfinite(scale))
    throw InputError("gamma_sample: shape and scale must be finite and > 0");
  std::gamma_distribution<double> g(shape, scale);
  return g(rng);
}

// ---------------------------------------------------------------- linear

namespace {

Domain symmetric_box(std::size_t dim, double bound) {
  return Domain{std::vector<Interval>(dim, Interval{-bound, bound})};
}

double normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

}  // namespace

LinearModel::LinearModel(std::size_t design_dim, bool gamma_noise, LinearPrior prior, double bound)
    : SimulatorModel(symmetric_box(design_dim, bound)), gamma_noise_(gamma_noise), prior_(prior) {
  if ((prior_.std.array() < 0.0).any()) throw ConfigError("linear: prior std must be >= 0");
}

Eigen::VectorXd LinearModel::sample_prior(Rng& rng) const {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd th(2);
  for (int k = 0; k < 2; ++k) th[k] = prior_.mean[k] + prior_.std[k] * n(rng);
  return th;
}

double LinearModel::prior_density(const Eigen::VectorXd& theta) const {
  double p = 1.0;
  for (int k = 0; k < 2; ++k) {
    if (prior_.std[k] == 0.0)
      p *= theta[k] == prior_.mean[k] ? 1.0 : 0.0;
    else
      p *= normal_pdf(theta[k], prior_.mean[k], prior_.std[k]);
  }
  return p;
}

NoiseDraw LinearModel::draw_noise(Rng& rng, std::size_t rows) const {
  const auto D = static_cast<Eigen::Index>(design_dim());
  const auto R = static_cast<Eigen::Index>(rows);
  NoiseDraw draw;
  draw.eps.resize(R, D);
  std::normal_distribution<double> n(0.0, 1.0);
  if (!gamma_noise_) {
    for (Eigen::Index i = 0; i < R; ++i)
      for (Eigen::Index j = 0; j < D; ++j) draw.eps(i, j) = n(rng);
    return draw;
  }
  draw.nu.resize(R, D);
  std::gamma_distribution<double> g(kGammaShape, kGammaScale);
  for (Eigen::Index i = 0; i < R; ++i)
    for (Eigen::Index j = 0; j < D; ++j) {
      draw.eps(i, j) = n(rng);
      draw.nu(i, j) = g(rng);
    }
  return draw;
}

Eigen::MatrixXd LinearModel::simulate(const Eigen::Ref<const Eigen::MatrixXd>& theta,
                                      const Eigen::VectorXd& d, const NoiseDraw& noise) const {
  check_inputs(theta, d, noise);
  Eigen::MatrixXd y = theta.col(1) * d.transpose();
  y.colwise() += theta.col(0);
  y += noise.eps;
  if (gamma_noise_) {
    if (noise.nu.rows() != noise.eps.rows() || noise.nu.cols() != noise.eps.cols())
      throw InputError("linear: Gamma noise block missing or misshaped");
    y += noise.nu;
  }
  return y;
}

Eigen::MatrixXd LinearModel::jacobian(const Eigen::VectorXd& theta, const Eigen::VectorXd& d,
                                      const NoiseDraw&) const {
  return linear_jacobian(Eigen::Vector2d{theta[0], theta[1]}, d);
}

Eigen::VectorXd LinearModel::jacobian_transpose_sum(const Eigen::Ref<const Eigen::MatrixXd>& theta,
                                                    const Eigen::VectorXd& d, const NoiseDraw&,
                                                    const Eigen::Ref<const Eigen::MatrixXd>& v) const {
  if (v.rows() != theta.rows() || v.cols() != d.size())
    throw InputError("linear: cotangent block has the wrong shape");
  // J_i = theta1_i * I
  return v.transpose() * theta.col(1);
}

Eigen::VectorXd linear_sample(const Eigen::Vector2d& theta, const Eigen::VectorXd& d,
                              const NoiseDraw& draw) {
  if (draw.eps.rows() != 1 || draw.eps.cols() != d.size() || draw.nu.rows() != 1 ||
      draw.nu.cols() != d.size())
    throw InputError("linear_sample: draw must hold one row of eps and nu per design coordinate");
  return (theta[0] + theta[1] * d.array() + draw.eps.row(0).transpose().array() +
          draw.nu.row(0).transpose().array())
      .matrix();
}

Eigen::MatrixXd linear_jacobian(const Eigen::Vector2d& theta, const Eigen::VectorXd& d) {
  return theta[1] * Eigen::MatrixXd::Identity(d.size(), d.size());
}

Eigen::VectorXd gaussian_linear_sample(const Eigen::Vector2d& theta, const Eigen::VectorXd& d,
                                       const NoiseDraw& draw) {
  if (draw.eps.rows() != 1 || draw.eps.cols() != d.size())
    throw InputError("gaussian_linear_sample: draw must hold one row of eps per design coordinate");
  return (theta[0] + theta[1] * d.array() + draw.eps.row(0).transpose().array()).matrix();
}

Eigen::MatrixXd gaussian_linear_jacobian(const Eigen::Vector2d& theta, const Eigen::VectorXd& d) {
  return linear_jacobian(theta, d);
}

// ---------------------------------------------------------------- pharmacokinetic

PkParams PkParams::from_vector(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() != 3) throw InputError("pk: theta must be (k_a, k_e, V)");
  return {v[0], v[1], v[2]};
}

void PkParams::validate() const {
  if (!(V > 0.0) || !(k_e > 0.0)) throw InputError("pk: k_e and V must be positive");
  if (k_a == k_e) throw InputError("pk: k_a == k_e makes the concentration curve singular");
}

double pk_mean_concentration(const PkParams& p, double t) {
  p.validate();
  return PkParams::kDose / p.V * p.k_a / (p.k_a - p.k_e) * (std::exp(-p.k_e * t) - std::exp(-p.k_a * t));
}

double pk_mean_rate(const PkParams& p, double t) {
  p.validate();
  return PkParams::kDose / p.V * p.k_a / (p.k_a - p.k_e) *
         (-p.k_e * std::exp(-p.k_e * t) + p.k_a * std::exp(-p.k_a * t));
}

const Eigen::Vector3d& PkModel::log_prior_mean() {
  static const Eigen::Vector3d mean{std::log(1.0), std::log(0.1), std::log(20.0)};
  return mean;
}

PkModel::PkModel(std::size_t design_dim, double t_max)
    : SimulatorModel(Domain{std::vector<Interval>(design_dim, Interval{0.0, t_max})}) {}

Eigen::Vector3d PkModel::sample_prior_unconstrained(Rng& rng) {
  std::normal_distribution<double> n(0.0, std::sqrt(kLogPriorVar));
  Eigen::Vector3d th;
  for (int k = 0; k < 3; ++k) th[k] = std::exp(log_prior_mean()[k] + n(rng));
  return th;
}

Eigen::VectorXd PkModel::sample_prior(Rng& rng) const { return pk_prior_sample(rng).as_vector(); }

PkParams pk_prior_sample(Rng& rng) {
  for (;;) {
    const Eigen::Vector3d th = PkModel::sample_prior_unconstrained(rng);
    if (th[0] > th[1]) return {th[0], th[1], th[2]};
  }
}

double PkModel::prior_density(const Eigen::VectorXd& theta) const {
  if (theta.size() != 3) throw InputError("pk: theta must be (k_a, k_e, V)");
  if ((theta.array() <= 0.0).any() || !(theta[0] > theta[1])) return 0.0;
  const double sd = std::sqrt(kLogPriorVar);
  double p = 1.0;
  for (int k = 0; k < 3; ++k) p *= normal_pdf(std::log(theta[k]), log_prior_mean()[k], sd) / theta[k];
  return p;
}

NoiseDraw PkModel::draw_noise(Rng& rng, std::size_t rows) const {
  const auto D = static_cast<Eigen::Index>(design_dim());
  const auto R = static_cast<Eigen::Index>(rows);
  NoiseDraw draw;
  draw.eps.resize(R, D);
  draw.nu.resize(R, D);
  std::normal_distribution<double> latent(0.0, kLatentStd);
  std::normal_distribution<double> obs(0.0, kObservationStd);
  for (Eigen::Index i = 0; i < R; ++i)
    for (Eigen::Index j = 0; j < D; ++j) {
      draw.eps(i, j) = latent(rng);
      draw.nu(i, j) = obs(rng);
    }
  return draw;
}

Eigen::MatrixXd PkModel::simulate(const Eigen::Ref<const Eigen::MatrixXd>& theta, const Eigen::VectorXd& d,
                                  const NoiseDraw& noise) const {
  check_inputs(theta, d, noise);
  Eigen::MatrixXd y(theta.rows(), d.size());
  for (Eigen::Index i = 0; i < theta.rows(); ++i) {
    const auto p = PkParams::from_vector(theta.row(i).transpose());
    for (Eigen::Index j = 0; j < d.size(); ++j)
      y(i, j) = pk_mean_concentration(p, d[j]) * (1.0 + noise.eps(i, j)) + noise.nu(i, j);
  }
  return y;
}

Eigen::MatrixXd PkModel::jacobian(const Eigen::VectorXd& theta, const Eigen::VectorXd& d,
                                  const NoiseDraw& noise) const {
  return pk_jacobian(PkParams::from_vector(theta), d, noise);
}

Eigen::VectorXd PkModel::jacobian_transpose_sum(const Eigen::Ref<const Eigen::MatrixXd>& theta,
                                                const Eigen::VectorXd& d, const NoiseDraw& noise,
                                                const Eigen::Ref<const Eigen::MatrixXd>& v) const {
  check_inputs(theta, d, noise);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(d.size());
  for (Eigen::Index i = 0; i < theta.rows(); ++i) {
    const auto p = PkParams::from_vector(theta.row(i).transpose());
    for (Eigen::Index j = 0; j < d.size(); ++j)
      acc[j] += pk_mean_rate(p, d[j]) * (1.0 + noise.eps(i, j)) * v(i, j);
  }
  return acc;
}

Eigen::VectorXd pk_sample(const PkParams& theta, const Eigen::VectorXd& t, const NoiseDraw& draw) {
  if (draw.eps.rows() != 1 || draw.eps.cols() != t.size() || draw.nu.rows() != 1 ||
      draw.nu.cols() != t.size())
    throw InputError("pk_sample: draw must hold one (eps, nu) pair per measurement time");
  Eigen::VectorXd y(t.size());
  for (Eigen::Index j = 0; j < t.size(); ++j)
    y[j] = pk_mean_concentration(theta, t[j]) * (1.0 + draw.eps(0, j)) + draw.nu(0, j);
  return y;
}

Eigen::MatrixXd pk_jacobian(const PkParams& theta, const Eigen::VectorXd& t, const NoiseDraw& draw) {
  if (draw.eps.rows() != 1 || draw.eps.cols() != t.size())
    throw InputError("pk_jacobian: draw must hold one eps per measurement time");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(t.size(), t.size());
  for (Eigen::Index j = 0; j < t.size(); ++j) J(j, j) = pk_mean_rate(theta, t[j]) * (1.0 + draw.eps(0, j));
  return J;
}

// ---------------------------------------------------------------- oscillatory

OscillatoryModel::OscillatoryModel(double t_max, bool withhold_gradients)
    : SimulatorModel(Domain{{Interval{0.0, t_max}}}), withhold_gradients_(withhold_gradients) {}

Eigen::VectorXd OscillatoryModel::sample_prior(Rng& rng) const {
  std::uniform_real_distribution<double> u(0.0, std::numbers::pi);
  Eigen::VectorXd th(1);
  th[0] = u(rng);
  return th;
}

double OscillatoryModel::prior_density(const Eigen::VectorXd& theta) const {
  if (theta.size() != 1) throw InputError("oscillatory: theta must be (omega)");
  return theta[0] >= 0.0 && theta[0] <= std::numbers::pi ? 1.0 / std::numbers::pi : 0.0;
}

NoiseDraw OscillatoryModel::draw_noise(Rng& rng, std::size_t rows) const {
  NoiseDraw draw;
  draw.eps.resize(static_cast<Eigen::Index>(rows), 1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (Eigen::Index i = 0; i < draw.eps.rows(); ++i) draw.eps(i, 0) = n(rng);
  return draw;
}

Eigen::MatrixXd OscillatoryModel::simulate(const Eigen::Ref<const Eigen::MatrixXd>& theta,
                                           const Eigen::VectorXd& d, const NoiseDraw& noise) const {
  check_inputs(theta, d, noise);
  Eigen::MatrixXd y(theta.rows(), 1);
  for (Eigen::Index i = 0; i < theta.rows(); ++i)
    y(i, 0) = std::sin(theta(i, 0) * d[0]) + kNoiseStd * noise.eps(i, 0);
  return y;
}

Eigen::MatrixXd OscillatoryModel::jacobian(const Eigen::VectorXd& theta, const Eigen::VectorXd& d,
                                           const NoiseDraw&) const {
  if (withhold_gradients_) throw_no_gradients();
  Eigen::MatrixXd J(1, 1);
  J(0, 0) = theta[0] * std::cos(theta[0] * d[0]);
  return J;
}

double oscillatory_sample(double omega, double t, const NoiseDraw& draw) {
  if (draw.eps.size() != 1) throw InputError("oscillatory_sample: draw must hold one eps");
  return std::sin(omega * t) + OscillatoryModel::kNoiseStd * draw.eps(0, 0);
}

}  // namespace infodesign::models
