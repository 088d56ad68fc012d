#include "infodesign/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <spdlog/spdlog.h>

#include "infodesign/errors.hpp"
#include "infodesign/parallel.hpp"

namespace infodesign::posterior {

double posterior_density(const nn::Network& net, const Eigen::VectorXd& theta, const Eigen::VectorXd& y_star,
                         const PriorDensity& prior_density) {
  const double t = nn::forward(net, {theta.data(), static_cast<std::size_t>(theta.size())},
                               {y_star.data(), static_cast<std::size_t>(y_star.size())});
  return std::exp(t - 1.0) * prior_density(theta);
}

Eigen::VectorXd critic_values(const nn::Network& net, const Eigen::MatrixXd& thetas, const Eigen::VectorXd& y_star) {
  const auto& cfg = net.config();
  if (static_cast<std::size_t>(thetas.cols()) != cfg.input_dim_theta ||
      static_cast<std::size_t>(y_star.size()) != cfg.input_dim_y)
    throw InputError("posterior: network input dimensions do not match theta / y*");
  const auto n = static_cast<std::size_t>(thetas.rows());
  Eigen::VectorXd out(thetas.rows());
  const nn::PackedNetwork packed(net);
  for_each_chunk(chunk_count(n), [&](std::size_t c) {
    const auto start = static_cast<Eigen::Index>(c * kChunkRows);
    const auto count = std::min<Eigen::Index>(static_cast<Eigen::Index>(kChunkRows), thetas.rows() - start);
    nn::RowMatrix x(count, thetas.cols() + y_star.size());
    x.leftCols(thetas.cols()) = thetas.middleRows(start, count);
    x.rightCols(y_star.size()).rowwise() = y_star.transpose();
    nn::RowPass pass;
    nn::forward_rows(packed, x, pass);
    out.segment(start, count) = pass.output;
  });
  return out;
}

double PosteriorEstimate::raw_density(const nn::Network& net, const Eigen::VectorXd& theta,
                                      const PriorDensity& prior) const {
  return posterior_density(net, theta, y_star, prior);
}

double PosteriorEstimate::normalized_density(const nn::Network& net, const Eigen::VectorXd& theta,
                                             const PriorDensity& prior) const {
  return raw_density(net, theta, prior) / raw_weights.mean();
}

PosteriorEstimate estimate_posterior(const nn::Network& net, const Eigen::MatrixXd& prior_samples,
                                     const Eigen::VectorXd& y_star) {
  if (prior_samples.rows() == 0) throw InputError("posterior: prior sample set is empty");
  PosteriorEstimate est;
  est.y_star = y_star;
  est.prior_samples = prior_samples;
  est.critic = critic_values(net, prior_samples, y_star);

  const auto& T = est.critic;
  double t_max = -std::numeric_limits<double>::infinity();
  Eigen::Index n_nan = 0;
  for (double t : T) {
    if (std::isnan(t)) ++n_nan;
    else t_max = std::max(t_max, t);
  }
  if (n_nan > 0 || !std::isfinite(t_max)) {
    std::ostringstream os;
    os << "posterior: cannot normalize weights (" << n_nan << " NaN critic values, max T " << t_max << " over "
       << T.size() << " draws)";
    throw DegeneracyError(os.str());
  }
  est.raw_weights = (T.array() - 1.0).exp();
  // shifting by max T keeps the normalization finite for any critic scale
  est.weights = (T.array() - t_max).exp();
  const double total = est.weights.sum();
  est.weights /= total;
  est.ess = 1.0 / est.weights.squaredNorm();
  if (est.degenerate())
    spdlog::warn("posterior: effective sample size {:.1f} of {} draws", est.ess, est.weights.size());
  return est;
}

Eigen::MatrixXd posterior_sample(const PosteriorEstimate& est, std::size_t n, Rng& rng) {
  const auto K = est.weights.size();
  std::vector<double> cum(static_cast<std::size_t>(K));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < K; ++i) cum[static_cast<std::size_t>(i)] = acc += est.weights[i];
  std::uniform_real_distribution<double> u(0.0, acc);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), est.prior_samples.cols());
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double v = u(rng);
    auto it = std::upper_bound(cum.begin(), cum.end(), v);
    if (it == cum.end()) --it;
    // skip zero-weight rows that share a cumulative value with their successor
    while (est.weights[it - cum.begin()] == 0.0 && it != cum.begin()) --it;
    out.row(r) = est.prior_samples.row(it - cum.begin());
  }
  return out;
}

Eigen::MatrixXd posterior_sample(const nn::Network& net, const Eigen::MatrixXd& prior_samples,
                                 const Eigen::VectorXd& y_star, std::size_t n, Rng& rng) {
  return posterior_sample(estimate_posterior(net, prior_samples, y_star), n, rng);
}

double sorted_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw InputError("quantile: empty sequence");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto k = static_cast<std::size_t>(pos);
  if (k + 1 >= sorted.size()) return sorted.back();
  const double w = pos - static_cast<double>(k);
  return (1.0 - w) * sorted[k] + w * sorted[k + 1];
}

std::vector<DimensionSummary> summarize(const Eigen::MatrixXd& samples) {
  if (samples.rows() < 2) throw InputError("summarize: need at least two samples");
  std::vector<DimensionSummary> out(static_cast<std::size_t>(samples.cols()));
  const double n = static_cast<double>(samples.rows());
  std::vector<double> col(static_cast<std::size_t>(samples.rows()));
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    auto& s = out[static_cast<std::size_t>(j)];
    s.mean = samples.col(j).mean();
    s.std = std::sqrt((samples.col(j).array() - s.mean).square().sum() / (n - 1.0));
    for (Eigen::Index i = 0; i < samples.rows(); ++i) col[static_cast<std::size_t>(i)] = samples(i, j);
    std::sort(col.begin(), col.end());
    s.lower = sorted_quantile(col, 0.16);
    s.upper = sorted_quantile(col, 0.84);
  }
  return out;
}

}  // namespace infodesign::posterior
