#include "infodesign/bo.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <numbers>
#include <utility>

#include <boost/math/tools/minima.hpp>
#include <spdlog/spdlog.h>

#include "infodesign/errors.hpp"

namespace infodesign::bo {

namespace {

constexpr double kSqrt5 = 2.23606797749978969641;
constexpr double kMaxJitter = 1e-2;
constexpr std::uint64_t kBoStream = 0x626f;
constexpr std::size_t kHyperSweeps = 4;
constexpr std::size_t kAcqSweeps = 3;
// local EI search window, as a fraction of each coordinate's range
constexpr double kAcqWindow = 0.05;
// EI proposals this close to a failed probe (or this close to any probe) are
// passed over; Chebyshev distance in range-normalized coordinates
constexpr double kFailedRadius = 0.05;
constexpr double kRepeatRadius = 1e-6;

double matern_r(double r, const KernelHyper& h) {
  const double s = kSqrt5 * r / h.lengthscale;
  return h.signal_var * (1.0 + s + s * s / 3.0) * std::exp(-s);
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& X, const KernelHyper& h) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    K(i, i) = h.signal_var;
    for (Eigen::Index j = 0; j < i; ++j) K(i, j) = K(j, i) = matern_r((X.row(i) - X.row(j)).norm(), h);
  }
  return K;
}

// nullopt when the factorization fails even at the largest jitter
std::optional<GaussianProcess> try_condition(const Eigen::MatrixXd& X, const Eigen::VectorXd& f,
                                             const KernelHyper& hyper, double noise_var, bool log_jitter) {
  GaussianProcess gp;
  gp.X = X;
  gp.f = f;
  gp.hyper = hyper;
  gp.noise_var = noise_var;
  gp.mean = f.mean();
  Eigen::MatrixXd K = kernel_matrix(X, hyper);
  K.diagonal().array() += noise_var;
  const double scale = std::max(hyper.signal_var, 1e-300);
  for (double jitter = 0.0;;) {
    Eigen::MatrixXd Kj = K;
    Kj.diagonal().array() += jitter;
    gp.chol.compute(Kj);
    if (gp.chol.info() == Eigen::Success && (gp.chol.matrixLLT().diagonal().array() > 0.0).all()) {
      gp.jitter = jitter;
      break;
    }
    jitter = jitter == 0.0 ? 1e-10 * scale : jitter * 10.0;
    if (jitter > kMaxJitter * scale) return std::nullopt;
    if (log_jitter) spdlog::warn("gp: kernel matrix not positive definite, adding jitter {:.3g}", jitter);
  }
  const Eigen::VectorXd r = f.array() - gp.mean;
  gp.alpha = gp.chol.solve(r);
  const double log_det = 2.0 * gp.chol.matrixLLT().diagonal().array().log().sum();
  gp.log_marginal_likelihood = -0.5 * r.dot(gp.alpha) - 0.5 * log_det -
                               0.5 * static_cast<double>(f.size()) * std::log(2.0 * std::numbers::pi);
  return gp;
}

template <class F>
double brent_max(F&& f, double lo, double hi, double* arg) {
  const auto r = boost::math::tools::brent_find_minima([&](double x) { return -f(x); }, lo, hi, 30);
  *arg = r.first;
  return -r.second;
}

}  // namespace

double matern52(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2, const KernelHyper& hyper) {
  if (!(hyper.signal_var > 0.0) || !(hyper.lengthscale > 0.0))
    throw InputError("matern52: hyperparameters must be positive");
  if (x1.size() != x2.size()) throw InputError("matern52: dimension mismatch");
  return matern_r((x1 - x2).norm(), hyper);
}

GaussianProcess gp_condition(const Eigen::MatrixXd& X, const Eigen::VectorXd& f, const KernelHyper& hyper,
                             double noise_var) {
  if (X.rows() != f.size() || X.rows() == 0) throw InputError("gp: need matching, nonempty X and f");
  if (!(hyper.signal_var > 0.0) || !(hyper.lengthscale > 0.0) || !(noise_var >= 0.0))
    throw InputError("gp: hyperparameters must be positive");
  auto gp = try_condition(X, f, hyper, noise_var, true);
  if (!gp) throw NumericalError("gp: kernel matrix ill-conditioned after maximum jitter");
  return std::move(*gp);
}

GaussianProcess gp_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& f, const GpFitConfig& cfg) {
  if (X.rows() < 2 || X.rows() != f.size()) throw InputError("gp_fit: need at least two observations");
  if (!f.allFinite() || !X.allFinite()) throw InputError("gp_fit: observations must be finite");
  if (!(cfg.noise_floor > 0.0)) throw InputError("gp_fit: noise floor must be positive");

  const double n = static_cast<double>(f.size());
  const double var_f = (f.array() - f.mean()).square().sum() / (n - 1.0);
  const double s = std::max(var_f, 1e-12 * (1.0 + f.mean() * f.mean()));
  double span = (X.colwise().maxCoeff() - X.colwise().minCoeff()).maxCoeff();
  if (!(span > 0.0)) span = 1.0;

  // search box in log space: signal variance, lengthscale, noise variance
  const std::array<double, 3> lo{std::log(s * 1e-4), std::log(span * 1e-3), std::log(cfg.noise_floor)};
  const std::array<double, 3> hi{std::log(s * 1e4), std::log(span * 1e2),
                                 std::log(std::max(cfg.noise_floor * 10.0, s * 10.0))};
  auto lml = [&](const std::array<double, 3>& p) {
    auto gp = try_condition(X, f, {std::exp(p[0]), std::exp(p[1])}, std::exp(p[2]), false);
    return gp ? gp->log_marginal_likelihood : -std::numeric_limits<double>::infinity();
  };

  Rng rng = make_rng(cfg.seed, kBoStream);
  std::array<double, 3> best_p{std::log(s), std::log(span / 3.0), std::log(std::max(cfg.noise_floor, s * 1e-2))};
  double best = lml(best_p);
  for (std::size_t r = 0; r < std::max<std::size_t>(cfg.restarts, 1); ++r) {
    std::array<double, 3> p = best_p;
    if (r > 0)
      for (std::size_t k = 0; k < 3; ++k) p[k] = std::uniform_real_distribution<double>(lo[k], hi[k])(rng);
    double val = lml(p);
    for (std::size_t sweep = 0; sweep < kHyperSweeps; ++sweep) {
      const double before = val;
      for (std::size_t k = 0; k < 3; ++k) {
        double arg = p[k];
        auto q = p;
        const double v = brent_max(
            [&](double x) {
              q[k] = x;
              return lml(q);
            },
            lo[k], hi[k], &arg);
        if (v > val) {
          val = v;
          p[k] = arg;
        }
      }
      if (val - before < 1e-9) break;
    }
    if (val > best) {
      best = val;
      best_p = p;
    }
  }
  if (!std::isfinite(best)) throw NumericalError("gp_fit: kernel matrix ill-conditioned after maximum jitter");
  return gp_condition(X, f, {std::exp(best_p[0]), std::exp(best_p[1])}, std::exp(best_p[2]));
}

Prediction gp_predict(const GaussianProcess& gp, const Eigen::VectorXd& x) {
  if (x.size() != gp.X.cols()) throw InputError("gp_predict: dimension mismatch");
  Eigen::VectorXd k(gp.X.rows());
  for (Eigen::Index i = 0; i < gp.X.rows(); ++i) k[i] = matern_r((gp.X.row(i).transpose() - x).norm(), gp.hyper);
  Prediction p;
  p.mean = gp.mean + k.dot(gp.alpha);
  const Eigen::VectorXd v = gp.chol.matrixL().solve(k);
  p.variance = gp.hyper.signal_var - v.squaredNorm();
  if (p.variance < 0.0) {
    spdlog::debug("gp_predict: clamping variance {:.3g} to 0", p.variance);
    p.variance = 0.0;
  }
  return p;
}

double expected_improvement(double mu, double sigma, double best) {
  if (!(sigma > 0.0)) return 0.0;
  const double z = (mu - best) / sigma;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(0.0, (mu - best) * cdf + sigma * pdf);
}

double expected_improvement(const GaussianProcess& gp, const Eigen::VectorXd& x, double best) {
  const auto p = gp_predict(gp, x);
  return expected_improvement(p.mean, std::sqrt(p.variance), best);
}

void BoConfig::validate() const {
  if (initial_probe_count < 1) throw ConfigError("bo: initial_probe_count must be >= 1");
  if (budget < initial_probe_count) throw ConfigError("bo: budget must be >= initial_probe_count");
  if (acquisition_restarts < 1) throw ConfigError("bo: acquisition_restarts must be >= 1");
  if (validation_sets < 1 || validation_size < 2) throw ConfigError("bo: validation sets must be nonempty");
}

Eigen::MatrixXd latin_hypercube(const models::Domain& domain, std::size_t n, Rng& rng) {
  const auto D = static_cast<Eigen::Index>(domain.dim());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), D);
  std::vector<std::size_t> perm(n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index k = 0; k < D; ++k) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto& b = domain.bounds[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < n; ++i) {
      const double t = (static_cast<double>(perm[i]) + u(rng)) / static_cast<double>(n);
      out(static_cast<Eigen::Index>(i), k) = std::clamp(b.lower + t * (b.upper - b.lower), b.lower, b.upper);
    }
  }
  return out;
}

namespace {

double scaled_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const models::Domain& domain) {
  double d = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const auto& iv = domain.bounds[static_cast<std::size_t>(k)];
    d = std::max(d, std::abs(a[k] - b[k]) / (iv.upper - iv.lower));
  }
  return d;
}

bool admissible(const Eigen::VectorXd& x, const std::vector<Probe>& probes, const models::Domain& domain) {
  for (const auto& p : probes)
    if (scaled_distance(x, p.design, domain) < (p.ok ? kRepeatRadius : kFailedRadius)) return false;
  return true;
}

Eigen::VectorXd maximize_ei(const GaussianProcess& gp, const models::Domain& domain, double best,
                            const Eigen::VectorXd& incumbent, const std::vector<Probe>& probes,
                            std::size_t restarts, Rng& rng) {
  const auto D = static_cast<Eigen::Index>(domain.dim());
  std::vector<std::pair<double, Eigen::VectorXd>> found;
  found.emplace_back(expected_improvement(gp, incumbent, best), incumbent);
  for (std::size_t r = 0; r < restarts; ++r) {
    Eigen::VectorXd x = domain.sample_uniform(rng);
    double val = expected_improvement(gp, x, best);
    for (std::size_t sweep = 0; sweep < kAcqSweeps; ++sweep) {
      for (Eigen::Index k = 0; k < D; ++k) {
        const auto& b = domain.bounds[static_cast<std::size_t>(k)];
        const double w = kAcqWindow * (b.upper - b.lower);
        const double lo = std::max(b.lower, x[k] - w), hi = std::min(b.upper, x[k] + w);
        Eigen::VectorXd y = x;
        double arg = x[k];
        const double v = brent_max(
            [&](double t) {
              y[k] = t;
              return expected_improvement(gp, y, best);
            },
            lo, hi, &arg);
        if (v > val) {
          val = v;
          x[k] = arg;
        }
      }
    }
    found.emplace_back(val, std::move(x));
  }
  std::stable_sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (const auto& [val, x] : found)
    if (admissible(x, probes, domain)) return x;
  // every local maximum repeats a probe; explore instead
  for (int tries = 0; tries < 1000; ++tries) {
    Eigen::VectorXd x = domain.sample_uniform(rng);
    if (admissible(x, probes, domain)) return x;
  }
  return domain.sample_uniform(rng);
}

}  // namespace

BoResult bo_optimize(const Objective& objective, const models::Domain& domain, const BoConfig& cfg) {
  cfg.validate();
  domain.validate();
  Rng rng = make_rng(cfg.seed, kBoStream);
  BoResult res;
  double incumbent = -std::numeric_limits<double>::infinity();
  std::size_t best_idx = 0;

  auto evaluate = [&](const Eigen::VectorXd& d, bool initial) {
    Probe p;
    p.design = d;
    p.initial = initial;
    try {
      p.objective = objective(d);
      if (!std::isfinite(p.objective)) throw NumericalError("objective is not finite");
      p.ok = true;
    } catch (const std::exception& e) {
      p.error = e.what();
      spdlog::warn("bo: probe {} failed: {}", res.probes.size(), p.error);
    }
    if (p.ok && p.objective > incumbent) {
      incumbent = p.objective;
      best_idx = res.probes.size();
    }
    res.probes.push_back(std::move(p));
    res.incumbent.push_back(incumbent);
  };

  auto observations = [&] {
    std::vector<std::size_t> ok;
    for (std::size_t i = 0; i < res.probes.size(); ++i)
      if (res.probes[i].ok) ok.push_back(i);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(ok.size()), static_cast<Eigen::Index>(domain.dim()));
    Eigen::VectorXd f(static_cast<Eigen::Index>(ok.size()));
    for (std::size_t r = 0; r < ok.size(); ++r) {
      X.row(static_cast<Eigen::Index>(r)) = res.probes[ok[r]].design.transpose();
      f[static_cast<Eigen::Index>(r)] = res.probes[ok[r]].objective;
    }
    return std::pair{X, f};
  };

  const Eigen::MatrixXd initial = latin_hypercube(domain, cfg.initial_probe_count, rng);
  for (Eigen::Index i = 0; i < initial.rows(); ++i) evaluate(initial.row(i).transpose(), true);

  while (res.probes.size() < cfg.budget) {
    auto [X, f] = observations();
    if (X.rows() < 2) {
      evaluate(domain.sample_uniform(rng), true);
      continue;
    }
    GpFitConfig gcfg = cfg.gp;
    gcfg.seed = derive_seed(cfg.gp.seed, res.probes.size());
    const GaussianProcess gp = gp_fit(X, f, gcfg);
    evaluate(maximize_ei(gp, domain, incumbent, res.probes[best_idx].design, res.probes, cfg.acquisition_restarts, rng),
             false);
  }

  if (!std::isfinite(incumbent)) throw NumericalError("bo: every probe failed");
  res.design = res.probes[best_idx].design;
  res.objective = incumbent;
  auto [X, f] = observations();
  if (X.rows() >= 2) {
    GpFitConfig gcfg = cfg.gp;
    gcfg.seed = derive_seed(cfg.gp.seed, res.probes.size());
    res.gp = gp_fit(X, f, gcfg);
  }
  return res;
}

double probe_objective(const models::SimulatorModel& model, const BoConfig& cfg, const Eigen::VectorXd& d,
                       std::uint64_t probe_seed, trainer::TrainResult* training) {
  trainer::TrainConfig tc = cfg.train;
  tc.seed = probe_seed;
  tc.design_init = d;
  nn::NetworkConfig nc = cfg.network;
  nc.seed = derive_seed(probe_seed, 1);
  auto r = trainer::train_at_design(model, nc, tc, d);
  Rng rng = make_rng(probe_seed, trainer::kValidationStream);
  const double score = trainer::validation_score(r.network, model, d, cfg.validation_sets, cfg.validation_size, rng).mean;
  if (training) *training = std::move(r);
  return score;
}

BoResult bo_optimize(const models::SimulatorModel& model, const BoConfig& cfg) {
  if (cfg.network.input_dim_theta != model.theta_dim() || cfg.network.input_dim_y != model.data_dim())
    throw ConfigError("bo: network input dimensions do not match the model");
  std::vector<trainer::TrainResult> trainings;
  std::uint64_t probe = 0;
  auto objective = [&](const Eigen::VectorXd& d) {
    trainer::TrainResult r{d, nn::Network(cfg.network), {}, 0, 0};
    const double v = probe_objective(model, cfg, d, derive_seed(cfg.seed, 1000 + probe++), &r);
    trainings.push_back(std::move(r));
    return v;
  };
  BoResult res = bo_optimize(objective, model.domain(), cfg);
  res.trainings = std::move(trainings);
  return res;
}

}  // namespace infodesign::bo
