#include "infodesign/reference.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>

#include <spdlog/spdlog.h>

#include "infodesign/errors.hpp"
#include "infodesign/parallel.hpp"

namespace infodesign::reference {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log sqrt(2 pi)

double normal_log_pdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * r * r / var - 0.5 * std::log(var) - kLogSqrt2Pi;
}

// Grid spacing as a fraction of the bandwidth, and the padding around the
// sample range, in bandwidths.
constexpr double kGridPerBandwidth = 32.0;
constexpr double kGridPadding = 12.0;
// Kernels further than this many bandwidths away contribute < e^-32.
constexpr double kWindow = 8.0;

}  // namespace

void NestedMcConfig::validate() const {
  if (N < 1 || M < 1) throw ConfigError("nested_mc: N and M must be >= 1");
}

NestedMcResult nested_mc_mi(const CoordinateLogLikelihood& log_lik, const models::SimulatorModel& model,
                            const Eigen::VectorXd& d, const NestedMcConfig& cfg) {
  cfg.validate();
  if (!model.domain().contains(d)) throw InputError("nested_mc: design lies outside the model domain");
  Rng outer_rng = make_rng(cfg.seed, 0);
  Rng inner_rng = make_rng(cfg.seed, 1);
  const Eigen::MatrixXd theta = model.sample_prior(outer_rng, cfg.N);
  const auto noise = model.draw_noise(outer_rng, cfg.N);
  const Eigen::MatrixXd y = model.simulate(theta, d, noise);
  const Eigen::MatrixXd inner = model.sample_prior(inner_rng, cfg.M);

  std::vector<Eigen::VectorXd> inner_rows(cfg.M);
  for (std::size_t s = 0; s < cfg.M; ++s) inner_rows[s] = inner.row(static_cast<Eigen::Index>(s)).transpose();
  const double log_m = std::log(static_cast<double>(cfg.M));
  const Eigen::Index D = d.size();

  struct Partial {
    double sum = 0.0, sum2 = 0.0;
  };
  const std::size_t C = chunk_count(cfg.N);
  std::vector<Partial> parts(C);
  for_each_chunk(C, [&](std::size_t c) {
    const std::size_t lo = c * kChunkRows, hi = std::min(cfg.N, lo + kChunkRows);
    std::vector<double> terms(cfg.M);
    Eigen::VectorXd th;
    for (std::size_t i = lo; i < hi; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      th = theta.row(ii).transpose();
      auto joint_ll = [&](const Eigen::VectorXd& t) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < D; ++j) s += log_lik(y(ii, j), d[j], t);
        return s;
      };
      const double own = joint_ll(th);
      if (!std::isfinite(own)) {
        std::ostringstream os;
        os << "nested_mc: non-finite log-likelihood " << own << " at outer sample " << i;
        throw NumericalError(os.str());
      }
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < cfg.M; ++s) {
        terms[s] = joint_ll(inner_rows[s]);
        if (std::isnan(terms[s]) || terms[s] == std::numeric_limits<double>::infinity()) {
          std::ostringstream os;
          os << "nested_mc: invalid log-likelihood " << terms[s] << " at outer sample " << i << ", inner sample "
             << s;
          throw NumericalError(os.str());
        }
        mx = std::max(mx, terms[s]);
      }
      if (!std::isfinite(mx)) {
        std::ostringstream os;
        os << "nested_mc: every inner likelihood vanished at outer sample " << i;
        throw NumericalError(os.str());
      }
      double acc = 0.0;
      for (double t : terms) acc += std::exp(t - mx);
      const double term = own - (mx + std::log(acc) - log_m);
      parts[c].sum += term;
      parts[c].sum2 += term * term;
    }
  });
  double sum = 0.0, sum2 = 0.0;
  for (const auto& p : parts) {
    sum += p.sum;
    sum2 += p.sum2;
  }
  const double n = static_cast<double>(cfg.N);
  NestedMcResult r;
  r.value = sum / n;
  if (cfg.N > 1) r.standard_error = std::sqrt(std::max(0.0, (sum2 - sum * sum / n) / (n - 1)) / n);
  return r;
}

// ---------------------------------------------------------------- KDE

KdeDensity::KdeDensity(std::vector<double> samples, double bandwidth)
    : samples_(std::move(samples)), bandwidth_(bandwidth) {
  if (samples_.empty()) throw InputError("kde: need at least one sample");
  if (!(bandwidth_ > 0.0) || !std::isfinite(bandwidth_)) throw InputError("kde: bandwidth must be positive");
  for (double s : samples_)
    if (!std::isfinite(s)) throw InputError("kde: samples must be finite");
  std::sort(samples_.begin(), samples_.end());

  const double h = bandwidth_;
  grid_step_ = h / kGridPerBandwidth;
  grid_lo_ = samples_.front() - kGridPadding * h;
  const double hi = samples_.back() + kGridPadding * h;
  const auto n_grid = static_cast<std::size_t>(std::ceil((hi - grid_lo_) / grid_step_)) + 1;
  log_table_.resize(n_grid);
  const double log_norm = std::log(static_cast<double>(samples_.size()) * h) + kLogSqrt2Pi;
  const std::size_t C = chunk_count(n_grid);
  for_each_chunk(C, [&](std::size_t c) {
    const std::size_t end = std::min(n_grid, (c + 1) * kChunkRows);
    for (std::size_t g = c * kChunkRows; g < end; ++g) {
      const double x = grid_lo_ + static_cast<double>(g) * grid_step_;
      auto first = std::lower_bound(samples_.begin(), samples_.end(), x - kWindow * h);
      auto last = std::upper_bound(first, samples_.end(), x + kWindow * h);
      double s = 0.0;
      for (auto it = first; it != last; ++it) {
        const double u = (x - *it) / h;
        s += std::exp(-0.5 * u * u);
      }
      log_table_[g] = s > 1e-200 ? std::log(s) - log_norm : exact_log_pdf(x);
    }
  });
}

double KdeDensity::exact_log_pdf(double x) const {
  // A sample at distance r contributes e^{-(r^2 - d0^2)/(2h^2)} relative to the
  // nearest one (distance d0). Beyond r^2 = d0^2 + 2h^2 L the n of them together
  // stay below e^{-40}, so they are skipped.
  const double h = bandwidth_;
  const double n = static_cast<double>(samples_.size());
  const auto near = std::lower_bound(samples_.begin(), samples_.end(), x);
  double d0 = std::numeric_limits<double>::infinity();
  if (near != samples_.end()) d0 = *near - x;
  if (near != samples_.begin()) d0 = std::min(d0, x - *std::prev(near));
  const double reach = std::sqrt(d0 * d0 + 2.0 * h * h * (40.0 + std::log(n)));
  const auto first = std::lower_bound(samples_.begin(), samples_.end(), x - reach);
  const auto last = std::upper_bound(first, samples_.end(), x + reach);
  const double mx = -0.5 * (d0 / h) * (d0 / h);
  double acc = 0.0;
  for (auto it = first; it != last; ++it) {
    const double u = (x - *it) / h;
    acc += std::exp(-0.5 * u * u - mx);
  }
  return mx + std::log(acc) - std::log(n * h) - kLogSqrt2Pi;
}

double KdeDensity::log_pdf(double x) const {
  const double pos = (x - grid_lo_) / grid_step_;
  if (!(pos >= 0.0) || pos >= static_cast<double>(log_table_.size() - 1)) return exact_log_pdf(x);
  const auto g = static_cast<std::size_t>(pos);
  const double w = pos - static_cast<double>(g);
  return (1.0 - w) * log_table_[g] + w * log_table_[g + 1];
}

double KdeDensity::operator()(double x) const { return std::exp(log_pdf(x)); }

double silverman_bandwidth(const std::vector<double>& samples) {
  const std::size_t n = samples.size();
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(n - 1);
    const auto k = static_cast<std::size_t>(pos);
    const double w = pos - static_cast<double>(k);
    return k + 1 < n ? (1 - w) * sorted[k] + w * sorted[k + 1] : sorted[k];
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

KdeDensity kde_fit(std::vector<double> samples, BandwidthRule rule) {
  if (samples.empty()) throw InputError("kde_fit: need at least one sample");
  double h = 0.0;
  switch (rule) {
    case BandwidthRule::silverman:
      h = silverman_bandwidth(samples);
      break;
  }
  if (!(h >= kBandwidthFloor)) {
    spdlog::warn("kde_fit: bandwidth {} below floor, using {}", h, kBandwidthFloor);
    h = kBandwidthFloor;
  }
  return KdeDensity(std::move(samples), h);
}

double kde_eval(const KdeDensity& k, double x) {
  const double h = k.bandwidth();
  double s = 0.0;
  for (double v : k.samples()) {
    const double u = (x - v) / h;
    s += std::exp(-0.5 * u * u);
  }
  return s / (static_cast<double>(k.samples().size()) * h * std::sqrt(2.0 * std::numbers::pi));
}

KdeDensity linear_noise_kde(std::size_t n, Rng& rng) {
  std::normal_distribution<double> n01;
  std::vector<double> draws(n);
  for (auto& v : draws) {
    const double eps = n01(rng);
    v = eps + models::gamma_sample(models::LinearModel::kGammaShape, models::LinearModel::kGammaScale, rng);
  }
  return kde_fit(std::move(draws));
}

// ---------------------------------------------------------------- likelihoods

double linear_likelihood(double y_j, double d_j, const Eigen::Vector2d& theta, const KdeDensity& noise_kde) {
  return noise_kde(y_j - (theta[0] + theta[1] * d_j));
}

double linear_likelihood(double y_j, double d_j, const Eigen::Vector2d& theta,
                         const std::function<double(double)>& noise_pdf) {
  return noise_pdf(y_j - (theta[0] + theta[1] * d_j));
}

double pk_log_likelihood(double y_j, double t_j, const models::PkParams& theta) {
  if (theta.k_a == theta.k_e) throw InputError("pk_likelihood: k_a equals k_e");
  const double f = models::pk_mean_concentration(theta, t_j);
  const double var = f * f * models::PkModel::kLatentStd * models::PkModel::kLatentStd +
                     models::PkModel::kObservationStd * models::PkModel::kObservationStd;
  return normal_log_pdf(y_j, f, var);
}

double pk_likelihood(double y_j, double t_j, const models::PkParams& theta) {
  return std::exp(pk_log_likelihood(y_j, t_j, theta));
}

double analytic_mi_gaussian_linear(const Eigen::VectorXd& d, const Eigen::Matrix2d& prior_cov, double noise_var) {
  if (!(noise_var > 0.0) || !std::isfinite(noise_var)) throw NumericalError("analytic_mi: noise variance must be > 0");
  if (!prior_cov.allFinite() || (prior_cov - prior_cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + prior_cov.cwiseAbs().maxCoeff()))
    throw NumericalError("analytic_mi: prior covariance must be finite and symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(prior_cov);
  if (es.eigenvalues().minCoeff() < -1e-12 * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff()))
    throw NumericalError("analytic_mi: prior covariance is not positive semi-definite");
  // det(I_D + X S X^T / s2) = det(I_2 + S X^T X / s2)
  Eigen::Matrix2d xtx;
  xtx << static_cast<double>(d.size()), d.sum(), d.sum(), d.squaredNorm();
  const Eigen::Matrix2d m = Eigen::Matrix2d::Identity() + prior_cov * xtx / noise_var;
  const double det = m.determinant();
  if (!(det > 0.0) || !std::isfinite(det)) throw NumericalError("analytic_mi: singular determinant");
  return 0.5 * std::log(det);
}

CoordinateLogLikelihood likelihood_for(const models::SimulatorModel& model, std::uint64_t seed,
                                       std::size_t kde_samples) {
  if (const auto* lin = dynamic_cast<const models::LinearModel*>(&model)) {
    if (!lin->gamma_noise())
      return [](double y, double d, const Eigen::VectorXd& t) { return normal_log_pdf(y, t[0] + t[1] * d, 1.0); };
    Rng rng = make_rng(seed, 0x6b6465);
    auto kde = std::make_shared<const KdeDensity>(linear_noise_kde(kde_samples, rng));
    return [kde](double y, double d, const Eigen::VectorXd& t) { return kde->log_pdf(y - (t[0] + t[1] * d)); };
  }
  if (dynamic_cast<const models::PkModel*>(&model)) {
    return [](double y, double d, const Eigen::VectorXd& t) {
      return pk_log_likelihood(y, d, models::PkParams{t[0], t[1], t[2]});
    };
  }
  if (dynamic_cast<const models::OscillatoryModel*>(&model)) {
    constexpr double var = models::OscillatoryModel::kNoiseStd * models::OscillatoryModel::kNoiseStd;
    return [](double y, double d, const Eigen::VectorXd& t) { return normal_log_pdf(y, std::sin(t[0] * d), var); };
  }
  throw CapabilityError(model.name() + ": no tractable likelihood for the reference MI");
}

}  // namespace infodesign::reference
